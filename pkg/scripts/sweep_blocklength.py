"""Max-min EE versus the codeword length n = n_c = n_p."""
from _common import run_sweep

if __name__ == "__main__":
    run_sweep("n", (128, 256, 512, 1024), __doc__)
