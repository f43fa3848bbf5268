"""Max-min EE versus the static power P_C for every scheme and RIS mode."""
from _common import run_sweep

if __name__ == "__main__":
    run_sweep("P_C", (0.1, 0.5, 1.0, 1.5, 2.0), __doc__)
