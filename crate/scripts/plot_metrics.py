#!/usr/bin/env python3
"""Plot the metric CSVs of one qdtn artifact directory into PNG files.

usage: plot_metrics.py RUN_DIR [--out DIR]
"""
import argparse
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd


def load(path):
    # First line is "# config {...}".
    return pd.read_csv(path, skiprows=1)


def rms_curve(df, title, out):
    acc = df[df["accepted"].astype(str) == "true"]
    fig, ax = plt.subplots()
    ax.semilogy(acc["epoch"], acc["rms_after"], marker=".")
    ax.set(xlabel="epoch", ylabel="RMS", title=title)
    fig.savefig(out, dpi=120)
    plt.close(fig)


def gan(df, out):
    fig, ax = plt.subplots()
    ax.plot(df["epoch"], df["real_pct"], label="real correct")
    ax.plot(df["epoch"], df["fake_pct"], label="fake correct")
    ax.plot(df["epoch"], df["real_pct_remeasured"], ls=":", label="real re-measured")
    ax.set(xlabel="GAN epoch", ylabel="% correct", ylim=(0, 105))
    ax.legend()
    fig.savefig(out, dpi=120)
    plt.close(fig)


def classifier(epochs, agg, out_dir):
    last = epochs[epochs["epoch"] == epochs["epoch"].max()].reset_index(drop=True)
    fig, ax = plt.subplots()
    colors = ["tab:blue" if c == "low" else "tab:orange" for c in last["class"]]
    ax.scatter(range(1, len(last) + 1), last["output"], c=colors)
    for y, c in [(0.25, "red"), (0.05, "green"), (0.6, "green")]:
        ax.axhline(y, color=c, lw=1)
    ax.set(xlabel="example", ylabel="output", title=f"epoch {last['epoch'][0]}")
    fig.savefig(out_dir / "classifier_outputs.png", dpi=120)
    plt.close(fig)

    fig, ax = plt.subplots()
    ax.plot(agg["epoch"], agg["percent_correct"])
    ax.set(xlabel="epoch", ylabel="% correct", ylim=(0, 105))
    fig.savefig(out_dir / "classifier_percent.png", dpi=120)
    plt.close(fig)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("run_dir", type=Path)
    ap.add_argument("--out", type=Path)
    a = ap.parse_args()
    out = a.out or a.run_dir
    out.mkdir(parents=True, exist_ok=True)
    d = a.run_dir
    for name in ["stage1", "stage3"]:
        if (d / f"{name}.csv").exists():
            rms_curve(load(d / f"{name}.csv"), name, out / f"{name}.png")
    if (d / "gan_metrics.csv").exists():
        gan(load(d / "gan_metrics.csv"), out / "gan_metrics.png")
    if (d / "classifier_epochs.csv").exists():
        classifier(load(d / "classifier_epochs.csv"), load(d / "classifier_aggregate.csv"), out)


if __name__ == "__main__":
    main()
