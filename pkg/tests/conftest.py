import numpy as np
import pytest

from guidedplace.netlist import Canvas, Macro, Net, Netlist, Pin


def make_netlist(sizes, nets, pads=(), canvas=(0.0, 0.0, 100.0, 100.0), name="t"):
    """Tiny netlist builder.

    ``sizes`` is a list of (w, h); ``pads`` a list of (x, y); ``nets`` a list of
    pin lists, each pin ``owner`` or ``(owner, ox, oy)``.
    """
    m = len(sizes)
    macros = [Macro(i, float(w), float(h), True, f"m{i}") for i, (w, h) in enumerate(sizes)]
    pad_nodes = [Macro(m + j, 0.0, 0.0, False, f"p{j}", float(x), float(y))
                 for j, (x, y) in enumerate(pads)]
    out = []
    for k, pins in enumerate(nets):
        ps = []
        for p in pins:
            if isinstance(p, tuple):
                ps.append(Pin(int(p[0]), float(p[1]), float(p[2])))
            else:
                ps.append(Pin(int(p)))
        out.append(Net(k, tuple(ps), f"n{k}"))
    return Netlist(tuple(macros), tuple(pad_nodes), tuple(out), Canvas(*canvas), name=name)


def random_instance(m, n_nets, seed, n_pads=2, side=1.0, max_degree=4):
    """Random netlist with offsets inside each owner, plus a random placement."""
    rng = np.random.default_rng(seed)
    sizes = rng.uniform(0.05, 0.3, (m, 2)) * side
    pads = rng.uniform(0.0, side, (n_pads, 2))
    nets = []
    for _ in range(n_nets):
        d = int(rng.integers(2, max_degree + 1))
        owners = rng.choice(m + n_pads, size=min(d, m + n_pads), replace=False)
        pins = []
        for o in owners:
            if o < m:
                pins.append((int(o), *(rng.uniform(-0.5, 0.5, 2) * sizes[o])))
            else:
                pins.append(int(o))
        nets.append(pins)
    nl = make_netlist(sizes, nets, pads, (0.0, 0.0, side, side), name=f"rand{seed}")
    placement = rng.uniform(0.0, side, (m, 2)) - sizes / 2
    return nl, placement


@pytest.fixture
def two_pad_net():
    # one net joining two zero-size pads at (0,0) and (3,4); one dummy macro
    return make_netlist([(1.0, 1.0)], [[1, 2]], pads=[(0.0, 0.0), (3.0, 4.0)])


@pytest.fixture(scope="session")
def desk_dataset():
    """The 200-sample training set: 8 base designs, 25 rewirings each."""
    from guidedplace.data import build_dataset, desk_bases
    return build_dataset(desk_bases(0), 25, seed=0)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.RESULTS):
            terminalreporter.write_line(line)
