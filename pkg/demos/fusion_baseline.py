"""
Conventional fusion dead reckoning
==================================

A complementary filter blends integrated gyro rate with magnetometer heading;
acceleration is rotated into the world frame and integrated twice. Any
residual bias is integrated twice too, so the position error grows roughly
with the square of time. This is what a learned tracker avoids.
"""

import argparse

import numpy as np

from inertial_ot.baseline import double_integrate, estimate_heading, fusion_sequence
from inertial_ot.evaluate import distance_error, heading_error, percentile
from inertial_ot.sim import (
    IMU_RATE,
    DatasetConfig,
    NoiseModel,
    RigidBodyOffset,
    Trajectory,
    build_dataset,
    imu_from_trajectory,
)


def main():
    parser = argparse.ArgumentParser(description=__doc__.strip().splitlines()[0])
    parser.add_argument("--seqs-per-domain", type=int, default=10)
    parser.add_argument("--gain", type=float, default=0.02)
    args = parser.parse_args()

    # a robot that never moves: every metre of error is drift
    n = int(20 * IMU_RATE)
    t = np.arange(n) / IMU_RATE
    still = Trajectory(t, np.full(n, 3.0), np.full(n, 2.0), np.full(n, 0.4))
    print("stationary drift (median over 20 noise draws)")
    errs = []
    for seed in range(20):
        imu = imu_from_trajectory(still, RigidBodyOffset.for_domain(0), NoiseModel(), seed=seed)
        th = estimate_heading(t, imu.gyro[:, 2], imu.mag, args.gain)
        p = double_integrate(t, imu.accel, th, (0, 0), (3.0, 2.0))
        errs.append(np.hypot(p[:, 0] - 3.0, p[:, 1] - 2.0))
    med = np.median(errs, axis=0)
    for sec in (2.5, 5, 10, 20):
        print(f"  t = {sec:4.1f} s   error {med[int(sec * IMU_RATE) - 1]:.3f} m")

    # on the simulated dataset, per test sequence
    ds = build_dataset(DatasetConfig(seqs_per_domain=args.seqs_per_domain), seed=0)
    print("\ndomain  p90 distance (m)  p90 heading (deg)")
    for k in range(8):
        d, h = [], []
        for sid in ds.test_ids:
            traj, gt = fusion_sequence(ds, k, int(sid), args.gain)
            d.append(distance_error(traj, gt))
            h.append(heading_error(traj, gt))
        print(f"{k:6d}  {percentile(d, 90):16.2f}  {np.degrees(percentile(h, 90)):17.2f}")


if __name__ == "__main__":
    main()
