from spikeae.coding import CodingParams
from spikeae.lif import LifParams
from spikeae.models import ModelConfig, RegWeights


def micro_config(family="SAE", surrogate=False, reg=None, T=5, s=0.9, n_z=8, dtype="float64"):
    """8x8 images, 3x3 kernels, channels 2/4: small enough for finite differences."""
    return ModelConfig(
        family=family,
        n_z=n_z,
        image_size=8,
        kernel_size=3,
        channels=(2, 4),
        coding=CodingParams(s=s, T=T),
        lif=LifParams(surrogate=surrogate),
        reg=reg or RegWeights(),
        dtype=dtype,
    )


def write_fake_mnist(root, n_train=80, n_val=40, seed=0):
    """IDX files with random 28x28 digits-shaped noise and cycling labels."""
    import struct

    import numpy as np

    from spikeae.data import IMAGE_MAGIC, LABEL_MAGIC, SPLIT_FILES

    rng = np.random.default_rng(seed)
    root.mkdir(parents=True, exist_ok=True)
    for split, n in (("train", n_train), ("validation", n_val)):
        images = (rng.random((n, 28, 28)) < 0.15).astype(np.uint8) * rng.integers(100, 256, (n, 28, 28), dtype=np.uint8)
        labels = (np.arange(n) % 10).astype(np.uint8)
        img_name, lab_name = SPLIT_FILES[split]
        (root / img_name).write_bytes(struct.pack(">IIII", IMAGE_MAGIC, n, 28, 28) + images.tobytes())
        (root / lab_name).write_bytes(struct.pack(">II", LABEL_MAGIC, n) + labels.tobytes())
    return root


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES = {}


def report(number, ok, detail):
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.setdefault(number, []).append(line)
    print(line, flush=True)
    return ok
