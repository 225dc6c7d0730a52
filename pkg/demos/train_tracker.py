"""
Learned inertial tracking on one domain
=======================================

A convolutional front end summarises each 0.5 s window, two LSTM layers carry
context across the 20 s sequence, and a small regressor predicts the window
displacement from the latent and its own previous output. The model is
trained on one sensor offset and then tested on all eight: error rises as the
test offset moves away from the training offset.
"""

import argparse
import time

from inertial_ot.adapt import TrainConfig, gather, train_supervised
from inertial_ot.evaluate import evaluate_model, percentile
from inertial_ot.sim import DatasetConfig, build_dataset
from inertial_ot.tracker import POLAR, TrackerConfig


def main():
    parser = argparse.ArgumentParser(description=__doc__.strip().splitlines()[0])
    parser.add_argument("--seqs-per-domain", type=int, default=40)
    parser.add_argument("--domain", type=int, default=0)
    parser.add_argument("--epochs", type=int, default=20)
    parser.add_argument("--head", default="cartesian", choices=["cartesian", "polar"])
    args = parser.parse_args()

    ds = build_dataset(DatasetConfig(seqs_per_domain=args.seqs_per_domain), seed=0)
    cfg = TrainConfig(epochs=args.epochs, tracker=TrackerConfig(head=args.head))
    data = gather(ds, [args.domain], "train", tracker=cfg.tracker)
    print(f"training on domain {args.domain}: {len(data)} sequences of "
          f"{cfg.tracker.n_windows} x {cfg.tracker.window} samples")

    t0 = time.perf_counter()
    params, hist = train_supervised(data, cfg)
    print(f"{params.n_params()} parameters, {time.perf_counter() - t0:.0f} s")
    shown = sorted(set(range(0, len(hist.rows), max(1, args.epochs // 5))) | {len(hist.rows) - 1})
    for epoch, loss, _ in (hist.rows[i] for i in shown):
        print(f"  epoch {epoch:3d}  loss {loss:.5f}")

    print("\ntest domain  p90 distance (m)" + ("  p90 heading (rad)" if args.head == POLAR else ""))
    for j in range(8):
        err = evaluate_model(params, ds, j)
        line = f"{j:11d}  {err.p90():16.3f}"
        if args.head == POLAR:
            line += f"  {percentile(err.heading, 90):17.3f}"
        print(line)


if __name__ == "__main__":
    main()
