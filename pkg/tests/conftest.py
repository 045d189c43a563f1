import os

import numpy as np
import pytest

from fairdiffusion import ConditionVocab, load_mnist_split

MNIST_DIR = os.environ.get("FAIRDIFFUSION_MNIST", os.path.join(os.path.dirname(__file__), "..", "data", "mnist"))
CACHE_DIR = os.environ.get("FAIRDIFFUSION_CACHE", os.path.join(os.path.dirname(__file__), "..", "data", "cache"))


def mnist_file(stem):
    for name in (stem + ".gz", stem):
        path = os.path.join(MNIST_DIR, name)
        if os.path.exists(path):
            return path
    pytest.skip(f"MNIST file {stem} not found under {MNIST_DIR}; run scripts/fetch_mnist.py")


@pytest.fixture(scope="session")
def mnist_train():
    return load_mnist_split(mnist_file("train-images-idx3-ubyte"), mnist_file("train-labels-idx1-ubyte"))


@pytest.fixture(scope="session")
def mnist_test():
    return load_mnist_split(mnist_file("t10k-images-idx3-ubyte"), mnist_file("t10k-labels-idx1-ubyte"))


@pytest.fixture(scope="session")
def mnist_dir():
    mnist_file("train-images-idx3-ubyte")
    return MNIST_DIR


@pytest.fixture(scope="session")
def cache_dir():
    os.makedirs(CACHE_DIR, exist_ok=True)
    return CACHE_DIR


@pytest.fixture(scope="session")
def vocab():
    return ConditionVocab()


@pytest.fixture(scope="session")
def trained_oracle(mnist_train, mnist_test, cache_dir):
    """Full-accuracy oracle, trained once per machine and cached on disk."""
    from fairdiffusion.checkpoint import load_oracle, save_oracle
    from fairdiffusion.oracle import DigitOracle

    path = os.path.join(cache_dir, "oracle-seed0")
    if os.path.exists(os.path.join(path, "manifest.json")):
        oracle, meta = load_oracle(path)
        return oracle, float(meta["accuracy"])
    images, labels = mnist_train
    oracle = DigitOracle(seed=0)
    oracle.fit(images, labels)
    test_x, test_y = mnist_test
    accuracy = float(np.mean(oracle.predict(test_x) == test_y))
    save_oracle(oracle, path, extra_meta={"accuracy": accuracy, "test_size": int(test_y.size)})
    return oracle, accuracy
