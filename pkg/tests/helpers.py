import numpy as np


def crandn(rng, *shape):
    """Circularly symmetric unit-variance complex Gaussian samples."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


# (name, passed, detail) of every acceptance criterion run in this session
ACCEPTANCE_LINES: list[tuple[str, bool, str]] = []


def record(name: str, passed: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append((name, passed, detail))
    assert passed, f"{name}: {detail}"
