import numpy as np
import pytest

from roar import numeric as nm


def grad_rel_error(analytic, numeric):
    """max |a - n| over the tensor, scaled by the tensor's largest magnitude."""
    scale = max(float(np.max(np.abs(analytic))), float(np.max(np.abs(numeric))), 1e-300)
    return float(np.max(np.abs(analytic - numeric))) / scale


def check_gradients(build, arrays, eps=1e-5):
    """Compare tape gradients of ``build(tensors)`` with central differences.

    ``arrays`` maps names to float64 arrays that are perturbed in place.
    Returns {name: relative error}.
    """
    tensors = {k: nm.Tensor(v, requires_grad=True) for k, v in arrays.items()}
    with nm.GradTape() as tape:
        loss = build(tensors)
    tape.backward(loss)
    errors = {}
    for k, v in arrays.items():
        analytic = tensors[k].grad if tensors[k].grad is not None else np.zeros_like(v)
        numeric = nm.numerical_gradient(lambda: float(build({n: nm.Tensor(a) for n, a in arrays.items()}).data), v, eps)
        errors[k] = grad_rel_error(analytic, numeric)
    return errors


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def record_criterion(number, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} :: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
