"""Mission success as a function of commanded speed.

Runs the full pipeline once per v_max on the same detector and prints the
per-skill failure probabilities, so the effect of behaviour on risk is
visible directly. Velocity stress enters through each component's c_v.

    python scripts/risk_sweep.py --speeds 0.25 0.5 1 1.5 2
"""

import argparse
from dataclasses import replace
from importlib.resources import files

from riskpipe.behavior import build_profile
from riskpipe.config import PipelineConfig
from riskpipe.riskgen import load_risk_data, transform
from riskpipe.skills import build_dataset, detect, random_scenarios, smooth_labels, train
from riskpipe.solver import solve_hybrid
from riskpipe.trajectory import generate_episode


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--speeds", type=float, nargs="+", default=[0.25, 0.5, 1.0, 1.5, 2.0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--episodes", type=int, default=200)
    ap.add_argument("--risk-data", help="risk data JSON (default: bundled sample)")
    args = ap.parse_args()

    cfg = PipelineConfig(seed=args.seed)
    cfg = replace(cfg, training=replace(cfg.training, episodes=args.episodes))
    _, corpus_seed, _, _ = cfg.seeds()
    t = cfg.training
    corpus = random_scenarios(t.episodes, corpus_seed, cfg.scenario, tuple(t.v_max_range), t.duration_jitter)
    model = train(build_dataset(corpus, cfg.window, cfg.stride), cfg.train_config())
    if args.risk_data:
        with open(args.risk_data, "rb") as f:
            risk = load_risk_data(f.read())
    else:
        risk = load_risk_data(files("riskpipe").joinpath("data/sample_risk.json").read_bytes())

    print(f"{'v_max':>6}  {'Move':>10} {'Pick':>10} {'Carry':>10} {'Place':>10}  {'success':>16}")
    for v in args.speeds:
        ep = replace(cfg.episode_config(), v_max=v)
        log, _ = generate_episode(ep)
        profile = build_profile(log, smooth_labels(detect(model, log), cfg.smooth), cfg.min_duration, cfg.activity)
        report = solve_hybrid(transform(profile, risk))
        by_skill = {}
        for r in report.rows:
            by_skill[r.skill] = by_skill.get(r.skill, 0.0) + r.failure_probability
        cells = " ".join(f"{by_skill.get(s, 0.0):10.3e}" for s in ("Move", "Pick", "Carry", "Place"))
        print(f"{v:6.2f}  {cells}  {report.success:16.12f}")


if __name__ == "__main__":
    main()
