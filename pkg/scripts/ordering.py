"""Per-trial ordering of schemes and RIS modes on paired channel draws.

Prints each trial's min-EE per configuration and flags trials where
rsma >= tin, star >= reflect or reflect >= random does not hold.
"""
from _common import base_spec, parser, summarize
from star_rsma.harness import run_experiment


def main():
    args = parser(__doc__).parse_args()
    spec = base_spec(args, schemes=("tin", "rsma"), ris_modes=("none", "random", "reflect", "star"))
    rows = run_experiment(spec)
    ee = {(r.trial, r.scheme, r.ris_mode): r.min_ee_nats for r in rows}
    n_bad = 0
    print("per-trial min-EE in nats per channel use per watt")
    for t in range(spec.trials):
        bad = [f"rsma<tin ({m})" for m in spec.ris_modes if ee[t, "rsma", m] < ee[t, "tin", m] - 1e-9]
        for s in spec.schemes:
            if ee[t, s, "star"] < ee[t, s, "reflect"] - 1e-9:
                bad.append(f"{s}: star<reflect")
            if ee[t, s, "reflect"] < ee[t, s, "random"] - 1e-9:
                bad.append(f"{s}: reflect<random")
        n_bad += bool(bad)
        vals = " ".join(f"{s}/{m}={ee[t, s, m]:.4f}" for s in spec.schemes for m in spec.ris_modes)
        print(f"trial {t:>2}  {vals}  {', '.join(bad)}")
    print(f"{spec.trials - n_bad}/{spec.trials} trials with every ordering intact\n")
    print("mean min-EE in bits per channel use per watt")
    summarize(spec, rows, args.out)


if __name__ == "__main__":
    main()
