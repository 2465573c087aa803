"""Run the bundled toy experiment and print the per-gamma table."""

import argparse

from laebound import experiment


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--output-dir", default="results/toy")
    parser.add_argument("--workers", type=int, default=1)
    args = parser.parse_args()
    config = experiment.ExperimentConfig(output_dir=args.output_dir, workers=args.workers)
    report, paths = experiment.cmd_run(config)
    print(experiment.format_table(report).split("\n\n")[0])
    print("reports: " + ", ".join(paths))


if __name__ == "__main__":
    main()
