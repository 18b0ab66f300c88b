#!/usr/bin/env python3
"""Train every hierarchical-attention method on the synthetic keyword
corpus and report train/test accuracy.

Usage: python scripts/run_toy_experiment.py [--epochs 30] [--seed 3]
"""
import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from absa_hybrid.model import ModelConfig
from absa_hybrid.toydata import toy_corpus, toy_embedder
from absa_hybrid.training import Hyperparams, evaluate, train


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--epochs", type=int, default=30)
    parser.add_argument("--seed", type=int, default=3)
    parser.add_argument("--hops", type=int, default=2)
    args = parser.parse_args()

    train_corpus = toy_corpus(300, seed=1, split="train")
    test_corpus = toy_corpus(100, seed=2, split="test")
    embedder = toy_embedder(dim=8, seed=17)

    print(f"{'method':>6} {'train_acc':>10} {'test_acc':>9} {'seconds':>8}")
    for method in range(5):
        config = ModelConfig(embed_dim=8, hidden_dim=6, hops=args.hops,
                             method=method)
        hyper = Hyperparams(learning_rate=0.07, momentum=0.9, l2=1e-5,
                            dropout=0.05, epochs=args.epochs, seed=args.seed)
        started = time.time()
        result = train(train_corpus, config, embedder, hyper)
        test_acc = evaluate(test_corpus, result.model, embedder).accuracy
        print(f"{method:>6} {result.trace[-1]['train_acc']:>10.3f} "
              f"{test_acc:>9.3f} {time.time() - started:>8.1f}")


if __name__ == "__main__":
    main()
