"""Command line entry points.

Subcommands: ``htest`` (dispersion-test sweep over minimum group sizes),
``pvalue`` (visual p-values for pick counts or an evaluation log),
``demo-study`` (build a synthetic two-design study on disk), ``serve``
(HTTP API), ``simulate`` (synthetic observers driving a served study),
``report`` (aggregate a study's pick log), and ``synth`` (write a
synthetic CSV). Flags fall back to LMELINEUP_* environment variables
where noted.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

__all__ = ["main"]


def _env_default(name: str, fallback):
    return os.environ.get(f"LMELINEUP_{name}", fallback)


def _load_design(args):
    from .data import build_design, load_csv, parse_spec_config

    spec = parse_spec_config(Path(args.spec).read_text())
    categorical = set((args.categorical or "").split(",")) - {""}
    categorical.add(spec.group_factor)
    needed = {spec.response, spec.group_factor}
    for t in spec.fixed_terms + spec.random_terms:
        if t.column:
            needed.add(t.column)
    schema = {c: ("categorical" if c in categorical else "numeric") for c in needed}
    data = load_csv(args.data, schema)
    return spec, data, build_design(spec, data)


def _cmd_htest(args):
    from .diagnostics import h_test
    from .fit import fit

    spec, data, design = _load_design(args)
    lo, hi = (int(s) for s in args.min_size.split(":")) if ":" in args.min_size \
        else (int(args.min_size), int(args.min_size))
    fitted = None
    if args.bootstrap:
        fitted = fit(design, method=args.method)
    rows = []
    for ms in range(lo, hi + 1):
        try:
            r = h_test(design, ms, fitted=fitted, B=args.bootstrap or None,
                       seed=args.seed if args.bootstrap else None, n_jobs=args.jobs)
        except Exception as exc:  # too few eligible groups at large minimums
            print(f"min_size={ms}: {exc}", file=sys.stderr)
            continue
        rows.append(r.table_row())
    header = f"{'min size':>8}  {'H':>8}  {'d.f.':>5}  {'naive p':>8}  {'bootstrap p':>11}"
    print(header)
    for row in rows:
        bp = "-" if row["p_bootstrap"] is None else f"{row['p_bootstrap']:.4f}"
        print(f"{row['min_group_size']:>8}  {row['H']:>8.1f}  {row['df']:>5}  "
              f"{row['p_naive']:>8.4f}  {bp:>11}")
    if args.csv_out:
        import csv

        with open(args.csv_out, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["min_group_size", "H", "df",
                                               "p_naive", "p_bootstrap"])
            w.writeheader()
            w.writerows(rows)
        print(f"wrote {args.csv_out}")


def _count_from_log(path, answer, lineup_id):
    x = K = 0
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        if lineup_id and rec.get("lineup_id") != lineup_id:
            continue
        K += 1
        x += rec["panel_index"] == answer
    return x, K


def _cmd_pvalue(args):
    from .pvalue import binomial_pvalue, combined_pvalue, visual_pvalue_mc

    if args.evals:
        if args.answer is None:
            raise SystemExit("--evals needs --answer (the revealed data-panel index)")
        x, K = _count_from_log(args.evals, args.answer, args.lineup)
        ks = [K]
        print(f"counted x = {x} of K = {K} from {args.evals}")
    else:
        if args.x is None or args.k is None:
            raise SystemExit("provide --x and --k, or --evals with --answer")
        x = args.x
        ks = [int(k) for k in str(args.k).split(",")]
    if len(ks) > 1:
        res = combined_pvalue(x, ks, m=args.m, reps=args.reps, seed=args.seed)
    elif args.method == "binomial":
        res = binomial_pvalue(x, ks[0], m=args.m)
    else:
        res = visual_pvalue_mc(x, ks[0], m=args.m, reps=args.reps, seed=args.seed)
    doc = {"x": res.x, "K": res.K, "m": res.m, "p": res.p,
           "method": res.method, "mc_se": res.mc_se}
    print(f"p = {res.p:.6f}  (method={res.method}"
          + (f", mc_se={res.mc_se:.2e}" if res.mc_se else "") + ")")
    if args.json_out:
        Path(args.json_out).write_text(json.dumps(doc, sort_keys=True))
        print(f"wrote {args.json_out}")


def _cmd_synth(args):
    from .data import synth_dataset

    params = json.loads(args.params) if args.params else {}
    ds = synth_dataset(args.kind, params, seed=args.seed)
    names = list(ds.columns)
    with open(args.out, "w") as fh:
        fh.write(",".join(names) + "\n")
        for i in range(ds.n_rows):
            cells = [f"{ds.columns[n][i]:.10g}" if ds.columns[n].dtype.kind == "f"
                     else str(ds.columns[n][i]) for n in names]
            fh.write(",".join(cells) + "\n")
    print(f"wrote {args.out} ({ds.n_rows} rows)")


def _cmd_demo_study(args):
    from .demo import build_demo_study

    manifest = build_demo_study(
        data_dir=args.data_dir, study_id=args.study,
        designs=args.designs.split(","), replicates=args.replicates,
        seed=args.seed, n_jobs=args.jobs)
    print(f"created study {args.study} with {len(manifest['lineups'])} lineups "
          f"in {args.data_dir}")


def _cmd_serve(args):
    import uvicorn

    from .service import create_app

    app = create_app(args.data_dir, ui_dir=args.ui_dir)
    uvicorn.run(app, host=args.host, port=int(args.port), log_level="warning")


def _cmd_report(args):
    from .study import StudyStore

    store = StudyStore(args.data_dir)
    rep = store.report(args.study, reps_single=args.reps, reps_combined=args.reps,
                       seed=args.seed)
    print(rep.to_text())
    if args.json_out:
        Path(args.json_out).write_text(rep.to_json())
        print(f"wrote {args.json_out}")


def _cmd_simulate(args):
    from .observers import accuracy_pick
    from .pvalue import REASONS
    from .study import StudyStore

    store = StudyStore(args.data_dir)
    answers = store.answers(args.study)
    manifest = store._manifest(args.study)
    m_by_id = {lu["lineup_id"]: lu["m"] for lu in manifest["lineups"]}
    rng = np.random.default_rng(args.seed)

    if args.url:
        import httpx

        client = httpx.Client(base_url=args.url, timeout=30.0)

        def get_next(obs):
            r = client.get(f"/studies/{args.study}/next", params={"observer": obs})
            r.raise_for_status()
            return r.json()

        def post_pick(obs, lid, panel, reasons, dur):
            r = client.post(f"/studies/{args.study}/lineups/{lid}/pick", json={
                "observer": obs, "panel": panel, "reasons": reasons,
                "confidence": int(rng.integers(1, 6)), "duration_s": dur})
            r.raise_for_status()
    else:
        from .study import PickRecord

        def get_next(obs):
            nxt = store.next_lineup(args.study, obs)
            return {"done": True} if nxt is None else {"lineup_id": nxt[0], "svg": nxt[1]}

        def post_pick(obs, lid, panel, reasons, dur):
            store.submit_pick(PickRecord(
                study_id=args.study, lineup_id=lid, observer_id=obs,
                panel_index=panel, reasons=tuple(reasons),
                confidence=int(rng.integers(1, 6)), duration_seconds=dur))

    total = 0
    for i in range(args.observers):
        obs = f"sim-{args.seed}-{i:04d}"
        while True:
            payload = get_next(obs)
            if payload.get("done"):
                break
            lid = payload["lineup_id"]
            panel = accuracy_pick(rng, m_by_id[lid], answers[lid], args.accuracy)
            reasons = [REASONS[int(rng.integers(0, 4))]]
            post_pick(obs, lid, panel, reasons, float(rng.uniform(3.0, 40.0)))
            total += 1
    print(f"submitted {total} picks from {args.observers} observers")


def main(argv=None):
    ap = argparse.ArgumentParser(prog="lmelineup",
                                 description="lineup diagnostics for mixed-effects models")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("htest", help="between-group dispersion test sweep")
    p.add_argument("--data", required=True, help="CSV file")
    p.add_argument("--spec", required=True, help="model config file")
    p.add_argument("--categorical", default="", help="comma list of categorical columns")
    p.add_argument("--min-size", default="3:15", help="minimum group size or lo:hi sweep")
    p.add_argument("--bootstrap", type=int, default=0, help="bootstrap replicates (0 = off)")
    p.add_argument("--method", default="REML")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--csv-out", default="")
    p.set_defaults(func=_cmd_htest)

    p = sub.add_parser("pvalue", help="visual p-value from pick counts or a log")
    p.add_argument("--x", type=int, help="data-panel picks (total if combined)")
    p.add_argument("--k", help="evaluations; comma list combines replicates")
    p.add_argument("--evals", default="", help="pick log (ndjson) to count from")
    p.add_argument("--answer", type=int, help="data-panel index for --evals counting")
    p.add_argument("--lineup", default="", help="restrict --evals to one lineup id")
    p.add_argument("--m", type=int, default=20)
    p.add_argument("--reps", type=int, default=10 ** 6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--method", choices=["visual", "binomial"], default="visual")
    p.add_argument("--json-out", default="")
    p.set_defaults(func=_cmd_pvalue)

    p = sub.add_parser("synth", help="write a synthetic dataset CSV")
    p.add_argument("--kind", required=True,
                   choices=["balanced_oneway", "radon_like", "longitudinal_like",
                            "dialyzer_like"])
    p.add_argument("--params", default="", help="JSON parameter overrides")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("demo-study", help="build a synthetic study on disk")
    p.add_argument("--data-dir", default=_env_default("DATA_DIR", "./study-data"))
    p.add_argument("--study", required=True)
    p.add_argument("--designs", default="qq,cyclone")
    p.add_argument("--replicates", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=_cmd_demo_study)

    p = sub.add_parser("serve", help="run the study HTTP service")
    p.add_argument("--data-dir", default=_env_default("DATA_DIR", "./study-data"))
    p.add_argument("--port", default=_env_default("PORT", "8787"))
    p.add_argument("--host", default=_env_default("HOST", "127.0.0.1"))
    p.add_argument("--ui-dir", default=_env_default("UI_DIR", "frontend/dist"))
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("report", help="aggregate a study's pick log")
    p.add_argument("--data-dir", default=_env_default("DATA_DIR", "./study-data"))
    p.add_argument("--study", required=True)
    p.add_argument("--reps", type=int, default=10 ** 5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json-out", default="")
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("simulate", help="drive a study with synthetic observers")
    p.add_argument("--data-dir", default=_env_default("DATA_DIR", "./study-data"))
    p.add_argument("--study", required=True)
    p.add_argument("--observers", type=int, default=20)
    p.add_argument("--accuracy", type=float, default=0.3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--url", default="", help="drive over HTTP instead of direct store access")
    p.set_defaults(func=_cmd_simulate)

    args = ap.parse_args(argv)
    args.func(args)


if __name__ == "__main__":
    main()
