"""Reference critical thresholds for homogeneous bond percolation on Z^d.

These are external constants: d=1 and d=2 are exact, d>=3 are standard
numerical estimates from the simulation literature.  Every estimator in this
package takes p_c as an explicit input; this table only supplies CLI
defaults, and outputs always record which value was used.
"""

# bond percolation thresholds p_c(d) on Z^d
PC_BOND = {
    1: 1.0,          # exact (a single broken bond splits the line)
    2: 0.5,          # exact (self-duality of the square lattice)
    3: 0.24881182,   # numerical estimate
    4: 0.16013122,   # numerical estimate
    5: 0.11817145,   # numerical estimate
    6: 0.09420165,   # numerical estimate
    7: 0.07868457,   # numerical estimate
    8: 0.06770839,   # numerical estimate
    9: 0.05949601,   # numerical estimate
}


def pc_default(d):
    """Literature default for p_c(d); raises if no tabulated value exists."""
    try:
        return PC_BOND[d]
    except KeyError:
        raise ValueError(
            f"no tabulated p_c for d={d}; pass an explicit value"
        ) from None
