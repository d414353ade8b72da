"""Compare the synthesized expected cost with a Monte Carlo estimate."""
import argparse

from fdsynth import DiscretizationParams, DpmParams, ProtocolParams, SimConfig, estimate, gen_dpm, gen_protocol, prepare, synthesize


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("family", choices=("protocol", "dpm"))
    ap.add_argument("--n", type=int, default=None)
    ap.add_argument("--runs", type=int, default=1_000_000)
    ap.add_argument("--seed", type=int, default=0)
    a = ap.parse_args()
    if a.family == "protocol":
        m = gen_protocol(ProtocolParams(a.n or 1))
    else:
        m = gen_dpm(DpmParams(a.n or 2))
    r = synthesize(m, DiscretizationParams.from_epsilon(1e-3, 0.01, 20.0))
    c, _ = prepare(m)
    e = estimate(c, r.delays, SimConfig(runs=a.runs, seed=a.seed))
    z = (e.mean - r.value_at_initial) / e.std_error
    print(f"delays {r.delays.finite()}")
    print(f"value {r.value_at_initial:.6f}  simulated {e.mean:.6f} +- {e.std_error:.6f}  ({z:+.2f} SE)")


if __name__ == "__main__":
    main()
