"""Command-line entry point: ``fdsynth synth|eval|simulate|gen|bench``."""
from __future__ import annotations

import argparse
import itertools
import json
import logging
import sys
import time
import warnings
from pathlib import Path

from . import io
from .embedded import DiscretizationParams, build_kernel
from .errors import FdError, ModelError
from .model import prepare
from .models import DpmParams, ProtocolParams, gen_dpm, gen_protocol
from .policy import initial_value, policy_evaluate, synthesize
from .simulator import SimConfig, estimate


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ModelError(f"{self.prog}: {message}", code="usage")


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ModelError(f"cannot read {path}: {e.strerror}", code="io_error") from None


def _write(text: str, out: str | None) -> None:
    if out is None:
        print(text)
    else:
        Path(out).write_text(text + "\n", encoding="utf-8")


def _load_model(path: str):
    return io.parse_model(_read(path))


def _params(a) -> DiscretizationParams:
    return DiscretizationParams.from_epsilon(a.epsilon, a.delta, a.tau_max, a.kappa)


def cmd_synth(a) -> int:
    m = _load_model(a.model)
    r = synthesize(m, _params(a), a.mode)
    if a.out:
        _write(io.dump_report(r, deterministic=a.deterministic), a.out)
    print(f"mode {r.mode}: {r.iterations} iterations, I={r.trunc_index}, value {r.value_at_initial:.9g}")
    for s, t in r.delays.finite().items():
        print(f"  d({s}) = {t:.9g}")
    if r.initial_in_target:
        print("  note: initial state is a target; value unrolls one step")
    return 0


def _delays_for(a):
    m = _load_model(a.model)
    c, cls = prepare(m)
    return c, cls, io.resolve_delays(c, cls, io.parse_delays(_read(a.delays)))


def cmd_eval(a) -> int:
    c, cls, d = _delays_for(a)
    finite = list(d.finite().values())
    tau_max = max(finite, default=1.0)
    k = build_kernel(c, DiscretizationParams(tau_max, tau_max, a.kappa, a.kappa), cls)
    x = policy_evaluate(k, c, d)
    print(f"value {initial_value(k, c, d, x):.9g}")
    return 0


def cmd_simulate(a) -> int:
    c, _cls, d = _delays_for(a)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        e = estimate(c, d, SimConfig(runs=a.runs, seed=a.seed))
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    print(f"mean {e.mean:.9g}  std_error {e.std_error:.3g}  runs {e.runs}  truncated {e.truncated_runs}")
    return 0


def cmd_gen(a) -> int:
    if a.family == "protocol":
        m = gen_protocol(
            ProtocolParams(a.n, p=a.p, q=a.q, lam=a.lam, rate_cost=a.rate_cost, fd_impulse=a.fd_impulse)
        )
    else:
        m = gen_dpm(DpmParams(a.n))
    _write(io.serialize_model(m), a.out)
    return 0


BENCH_SUITES = {
    # name -> (models, deltas, tau_maxes, epsilons)
    "equivalence": (
        [("protocol", 1), ("dpm", 2), ("dpm", 4)],
        [0.01, 0.001],
        [10.0, 20.0],
        [1e-2, 1e-3],
    ),
    "protocol": ([("protocol", n) for n in (1, 2, 3)], [0.01], [10.0], [1e-2]),
    "dpm": ([("dpm", n) for n in range(2, 9)], [0.01], [20.0], [1e-3]),
}


def _bench_model(family, n):
    return gen_protocol(ProtocolParams(n)) if family == "protocol" else gen_dpm(DpmParams(n))


def cmd_bench(a) -> int:
    models, deltas, taus, epss = BENCH_SUITES[a.suite]
    modes = ("explicit", "symbolic") if a.suite == "equivalence" or a.explicit else ("symbolic",)
    head = f"{'model':<12}{'states':>7}{'delta':>8}{'tau_max':>8}{'eps':>8}{'I':>6}"
    head += "".join(f"{m[:4] + ' it':>8}{m[:4] + ' s':>9}" for m in modes) + f"{'deg':>6}{'value':>14}{'same':>6}"
    print(head)
    rows = []
    for (family, n), delta, tau, eps in itertools.product(models, deltas, taus, epss):
        c, cls = prepare(_bench_model(family, n))
        params = DiscretizationParams.from_epsilon(eps, delta, tau)
        k = build_kernel(c, params, cls)
        res = {}
        for mode in modes:
            t0 = time.perf_counter()
            res[mode] = (synthesize(c, params, mode, kernel=k), time.perf_counter() - t0)
        r = res[modes[-1]][0]
        same = len({tuple(sorted(x[0].grid.items())) for x in res.values()}) == 1
        line = f"{family + str(n):<12}{c.n:>7}{delta:>8g}{tau:>8g}{eps:>8g}{k.trunc_index:>6}"
        line += "".join(f"{res[m][0].iterations:>8}{res[m][1]:>9.3f}" for m in modes)
        deg = max((st.max_degree for st in r.per_iteration), default=-1)
        line += f"{deg:>6}{r.value_at_initial:>14.9g}{'yes' if same else 'NO':>6}"
        print(line, flush=True)
        rows.append({"model": f"{family}{n}", "delta": delta, "tau_max": tau, "epsilon": eps,
                     "delays": r.delays.finite(), "value": r.value_at_initial, "identical": same})
    if a.out:
        _write(json.dumps(io.round_sig(rows), indent=1), a.out)
    return 0 if all(r["identical"] for r in rows) else 3


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fdsynth", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="synthesize timeouts")
    s.add_argument("model")
    s.add_argument("--epsilon", type=float, required=True)
    s.add_argument("--delta", type=float, required=True)
    s.add_argument("--tau-max", type=float, required=True)
    s.add_argument("--kappa", type=float, help="kernel accuracy (default epsilon/100)")
    s.add_argument("--mode", choices=("symbolic", "explicit"), default="symbolic")
    s.add_argument("--out")
    s.add_argument("--deterministic", action="store_true", help="omit timings from the report")
    s.set_defaults(func=cmd_synth)

    e = sub.add_parser("eval", help="expected cost of given timeouts")
    e.add_argument("model")
    e.add_argument("--delays", required=True)
    e.add_argument("--kappa", type=float, default=1e-9)
    e.set_defaults(func=cmd_eval)

    m = sub.add_parser("simulate", help="Monte Carlo estimate for given timeouts")
    m.add_argument("model")
    m.add_argument("--delays", required=True)
    m.add_argument("--runs", type=int, default=100_000)
    m.add_argument("--seed", type=int, default=0)
    m.set_defaults(func=cmd_simulate)

    g = sub.add_parser("gen", help="write a benchmark model")
    g.add_argument("family", choices=("protocol", "dpm"))
    g.add_argument("--n", type=int, default=None, help="Bobs (protocol, default 1) or buffer bound (dpm, default 2)")
    g.add_argument("--p", type=float, default=0.9)
    g.add_argument("--q", type=float, default=0.9)
    g.add_argument("--lam", type=float, default=1.0)
    g.add_argument("--rate-cost", type=float, default=1.0)
    g.add_argument("--fd-impulse", type=float, default=1.0)
    g.add_argument("--out")
    g.set_defaults(func=cmd_gen)

    b = sub.add_parser("bench", help="run a benchmark suite")
    b.add_argument("suite", choices=sorted(BENCH_SUITES))
    b.add_argument("--explicit", action="store_true", help="also time explicit mode")
    b.add_argument("--out")
    b.set_defaults(func=cmd_bench)
    return p


def cli_main(argv=None) -> int:
    try:
        a = build_parser().parse_args(argv)
        if a.cmd == "gen" and a.n is None:
            a.n = 1 if a.family == "protocol" else 2
        logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING)
        return a.func(a)
    except FdError as e:
        print(f"error [{e.code}]: {e}" + (f" (at {e.location})" if e.location else ""), file=sys.stderr)
        return e.exit_code
    except SystemExit as e:  # --help
        return int(e.code or 0)


def main():
    sys.exit(cli_main())
