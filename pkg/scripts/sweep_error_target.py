"""Max-min EE versus the total decoding-error target eps = eps_c + eps_p."""
from _common import run_sweep

if __name__ == "__main__":
    run_sweep("eps", (1e-7, 1e-6, 1e-5, 1e-4), __doc__)
