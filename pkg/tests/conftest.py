import pytest

from swarmmap.mesh.node import MeshNode
from swarmmap.mesh.tuples import MeshTuple, TupleValue, make_tuple_id


class Net:
    """Static or scripted topology driving bare mesh nodes in lock step."""

    def __init__(self, n, edges=(), storage=10, routing=10, ttl=50, bandwidth=4096):
        self.nodes = [MeshNode(i, storage, routing, ttl, ttl) for i in range(n)]
        self.adj = {i: set() for i in range(n)}
        self.set_edges(edges)
        self.inbox = [[] for _ in range(n)]
        self.step_no = 0
        self.bandwidth = bandwidth
        self.sent_bytes = [0] * n
        self.last_sent = [None] * n
        self.alive = set()
        self.in_flight = []

    def set_edges(self, edges):
        self.adj = {i: set() for i in self.adj}
        for a, b in edges:
            self.adj[a].add(b)
            self.adj[b].add(a)

    def begin(self):
        t = self.step_no
        for i, node in enumerate(self.nodes):
            node.receive(self.inbox[i], t)
            node.begin_step(t, sorted(self.adj[i]))

    def finish(self):
        t = self.step_no
        inbox = [[] for _ in self.nodes]
        for i, node in enumerate(self.nodes):
            data = node.route(t, self.bandwidth)
            self.last_sent[i] = data
            if data is None:
                continue
            self.sent_bytes[i] += len(data)
            for j in sorted(self.adj[i]):
                inbox[j].append(data)
        self.inbox = inbox
        self.in_flight = []
        for node in self.nodes:
            ev = node.events
            self.alive |= {item.tau for item in ev.created}
            self.alive -= set(ev.erased)
            self.in_flight += [item.tau for item in ev.in_flight]
            ev.clear()
        self.step_no += 1

    def check_conservation(self):
        """Every live tuple is owned exactly once, counting transfers on the air."""
        held = list(self.in_flight)
        for node in self.nodes:
            held += list(node.storage) + list(node.jobs)
            assert len(node.storage) <= node.storage_capacity
            assert node.queue_length <= node.routing_capacity
        assert len(held) == len(set(held)), "duplicated tuple"
        assert set(held) == self.alive, "lost or phantom tuple"

    def step(self, k=1):
        for _ in range(k):
            self.begin()
            self.finish()

    def put(self, i, item):
        """Place a tuple straight into a node's storage, bypassing placement."""
        node = self.nodes[i]
        node.storage[item.tau] = item
        node.since[item.tau] = self.step_no
        self.alive.add(item.tau)

    def holders(self, tau):
        return [n.agent_id for n in self.nodes if tau in n.storage or tau in n.jobs]


def make_item(agent, count, label=1, rho=5, xy=(1.0, 2.0), consolidated=False):
    value = TupleValue(label, (xy[0], xy[1], 0.25), 0.5, (0.1, -0.2, 0.25), consolidated)
    return MeshTuple(make_tuple_id(agent, count), rho, value)


@pytest.fixture
def net_factory():
    return Net


# -- acceptance gate reporting ------------------------------------------------

GATE = pytest.StashKey[dict]()


@pytest.fixture
def gate(request):
    """record(criterion, part, ok, detail) collects one line for the end-of-run summary."""
    results = request.config.stash.setdefault(GATE, {})

    def record(criterion, part, ok, detail=""):
        results.setdefault(criterion, []).append((part, bool(ok), detail))
        print(f"criterion {criterion}{part}: {'PASS' if ok else 'FAIL'} {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(GATE, None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(results):
        parts = results[crit]
        ok = all(good for _, good, _ in parts)
        detail = "; ".join(f"{name or 'all'} {'ok' if good else 'FAILED'}: {d}" for name, good, d in parts)
        terminalreporter.write_line(f"criterion {crit}: {'PASS' if ok else 'FAIL'} | {detail}")
