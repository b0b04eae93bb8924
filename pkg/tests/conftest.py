"""Session fixtures for the trained-network test tier.

The digit data resolves in this order: $BITGEO_MNIST_DIR, ./data/mnist,
then a built-in surrogate (sklearn's 8x8 digits upscaled to 28x28 and
augmented to ~50k samples). Either way the images reach the tests through
an IDX round trip, so the fixture path is byte-identical to what the train
subcommand consumes.
"""

import os
import time
from pathlib import Path

import numpy as np
import pytest

from bitgeo.bnn import TrainConfig, build_network, recalibrate_batch_norm, train
from bitgeo.data_io import Dataset, load_idx, write_idx

ACCEPT_ARCH = "784c-1024b-1024b-10s"
ACCEPT_CONFIG = dict(epochs=20, batch_size=32, learning_rate=0.4, lr_decay=0.995, seed=0)

TRAIN_STEMS = ("train-images-idx3-ubyte", "train-labels-idx1-ubyte")
TEST_STEMS = ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")


def _find_pair(dirpath, stems):
    for suffix in ("", ".gz"):
        images = dirpath / (stems[0] + suffix)
        labels = dirpath / (stems[1] + suffix)
        if images.exists() and labels.exists():
            return images, labels
    return None


def _surrogate_digits():
    """28x28 digit surrogate: upscaled 8x8 digits plus augmentation.

    1437 train / 360 test stratified base split, then 35x augmentation
    (rotations within 12 degrees, shifts within 3 px, pixel noise) to reach
    the sample count the 784-1024-1024-10 training recipe expects.
    """
    from scipy import ndimage
    from sklearn.datasets import load_digits
    from sklearn.model_selection import train_test_split

    digits = load_digits()
    x = digits.images / 8.0 - 1.0
    x = np.clip(np.stack([ndimage.zoom(img, 3.5, order=1) for img in x]), -1, 1)
    x_tr, x_te, y_tr, y_te = train_test_split(
        x, digits.target, test_size=360, stratify=digits.target, random_state=0
    )
    rng = np.random.default_rng(42)
    images = [x_tr]
    labels = [y_tr]
    for _ in range(34):
        batch = np.empty_like(x_tr)
        for i, img in enumerate(x_tr):
            out = ndimage.rotate(
                img, rng.uniform(-12, 12), reshape=False, order=1, mode="nearest"
            )
            batch[i] = np.roll(out, (rng.integers(-3, 4), rng.integers(-3, 4)), axis=(0, 1))
        batch += rng.normal(0.0, 0.05, batch.shape)
        images.append(np.clip(batch, -1, 1))
        labels.append(y_tr)
    x_aug = np.concatenate(images).reshape(-1, 784)
    y_aug = np.concatenate(labels).astype(np.int64)
    order = np.random.default_rng(7).permutation(len(x_aug))
    train_ds = Dataset(images=x_aug[order], labels=y_aug[order], split="train")
    test_ds = Dataset(
        images=x_te.reshape(-1, 784), labels=y_te.astype(np.int64), split="test"
    )
    return train_ds, test_ds


@pytest.fixture(scope="session")
def mnist_data(tmp_path_factory):
    """(train, test) Datasets for the 784-input training tier."""
    candidates = []
    env = os.environ.get("BITGEO_MNIST_DIR")
    if env:
        candidates.append(Path(env))
    candidates.append(Path(__file__).resolve().parent.parent / "data" / "mnist")
    for root in candidates:
        if not root.is_dir():
            continue
        train_pair = _find_pair(root, TRAIN_STEMS)
        test_pair = _find_pair(root, TEST_STEMS)
        if train_pair and test_pair:
            return (
                load_idx(*train_pair, split="train"),
                load_idx(*test_pair, split="test"),
            )
    train_ds, test_ds = _surrogate_digits()
    root = tmp_path_factory.mktemp("idx")
    write_idx(train_ds, root / TRAIN_STEMS[0], root / TRAIN_STEMS[1])
    write_idx(test_ds, root / TEST_STEMS[0], root / TEST_STEMS[1])
    return (
        load_idx(root / TRAIN_STEMS[0], root / TRAIN_STEMS[1], split="train"),
        load_idx(root / TEST_STEMS[0], root / TEST_STEMS[1], split="test"),
    )


@pytest.fixture(scope="session")
def trained_net(mnist_data):
    """Reference network trained with the locked recipe, plus timings."""
    train_ds, test_ds = mnist_data
    net = build_network(ACCEPT_ARCH, seed=ACCEPT_CONFIG["seed"])
    config = TrainConfig(arch=ACCEPT_ARCH, **ACCEPT_CONFIG)
    start = time.monotonic()
    history = train(net, train_ds, config)
    recalibrate_batch_norm(net, train_ds.images)
    duration = time.monotonic() - start
    return {
        "net": net,
        "history": history,
        "train_seconds": duration,
        "train": train_ds,
        "test": test_ds,
        "config": config,
    }


@pytest.fixture(scope="session")
def binary_first_net(mnist_data):
    """Smaller companion net trained with a binary first layer."""
    train_ds, test_ds = mnist_data
    subset = Dataset(
        images=train_ds.images[:8000], labels=train_ds.labels[:8000], split="train"
    )
    arch = "784b-256b-10s"
    net = build_network(arch, seed=0)
    config = TrainConfig(
        arch=arch, epochs=4, batch_size=16, learning_rate=0.2, lr_decay=0.995, seed=0
    )
    train(net, subset, config)
    recalibrate_batch_norm(net, subset.images)
    return {"net": net, "train": subset, "test": test_ds}
