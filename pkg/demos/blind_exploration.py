"""Recover a benchmark function from a one-shot design.

Each method places N points, the function is evaluated there, a 5-nearest-
neighbour regressor is fit, and the mean squared error on a dense test grid
is averaged over trials.

    python demos/blind_exploration.py --function ackley --n 100 --trials 5
"""
import argparse

from covdesign import BenchmarkFunction, blind_eval

parser = argparse.ArgumentParser()
parser.add_argument("--function", default="alpine1", choices=["alpine1", "ackley"])
parser.add_argument("--d", type=int, default=3)
parser.add_argument("--n", type=int, default=100)
parser.add_argument("--trials", type=int, default=5)
parser.add_argument("--methods", nargs="+", default=["random", "lhs", "sobol", "pds-dart", "proposed"])
args = parser.parse_args()

f = BenchmarkFunction(args.function, args.d)
print("method,mse_mean,mse_std")
for method in args.methods:
    res = blind_eval(method, f, args.n, args.trials)
    print(f"{method},{res.mse_mean:.5g},{res.mse_std:.3g}")
