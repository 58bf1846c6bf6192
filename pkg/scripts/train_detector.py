"""Train the skill detector on generated episodes and report held-out accuracy.

    python scripts/train_detector.py --episodes 200 --holdout 50 --out detector.json
"""

import argparse
import time

import numpy as np

from riskpipe.labels import SkillLabel
from riskpipe.skills import TrainConfig, build_dataset, evaluate, mean_loss, predict, random_scenarios, save_model, train


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--episodes", type=int, default=200)
    ap.add_argument("--holdout", type=int, default=50)
    ap.add_argument("--window", type=int, default=20)
    ap.add_argument("--stride", type=int, default=10)
    ap.add_argument("--epochs", type=int, default=50)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", help="write the checkpoint here")
    args = ap.parse_args()

    corpus_seed, holdout_seed, init_seed = np.random.SeedSequence(args.seed).generate_state(3)
    t0 = time.perf_counter()
    data = build_dataset(random_scenarios(args.episodes, int(corpus_seed)), args.window, args.stride)
    held = build_dataset(random_scenarios(args.holdout, int(holdout_seed)), args.window, args.stride)
    model = train(data, TrainConfig(epochs=args.epochs, seed=int(init_seed)))
    elapsed = time.perf_counter() - t0

    ev = evaluate(predict(model, held.features), held.labels)
    print(f"{len(data)} training windows, {len(held)} held-out windows, {elapsed:.1f} s")
    print(f"final training loss {mean_loss(model, data.features, data.labels):.4f}")
    print(f"held-out accuracy   {ev.accuracy:.4f}\n")
    names = [str(s) for s in SkillLabel]
    print("true \\ predicted  " + " ".join(f"{n:>6}" for n in names))
    for name, row in zip(names, ev.confusion):
        print(f"{name:<17} " + " ".join(f"{c:>6d}" for c in row))
    if args.out:
        with open(args.out, "wb") as f:
            f.write(save_model(model))
        print(f"\ncheckpoint -> {args.out}")


if __name__ == "__main__":
    main()
