"""Composed differential/shift operators applied to the identity map.

For a word ``a_1 ... a_m`` the engine returns
``(V~_{a_1} o ... o V~_{a_m})(id)(y)``.  Every letter acts on the function
built by the letters to its right, so the first letter is the outermost
operator.  Derivatives come from truncated jets pushed through the fields:
``V~_a G (y) = [e] G(y + e V_a(y))`` for a Wiener letter, and the time letter
adds the second-order Ito term and the finite jump compensator.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import BudgetExceededError, DomainError
from .jets import ArrayOps, Jet, JetOps
from .words import Alphabet, JumpSpec, Letter, Word, format_word

DEFAULT_MAX_ORDER = 4


# ---------------------------------------------------------------------------
# vector fields
# ---------------------------------------------------------------------------
class LinearField:
    """``V(y) = A y``."""

    def __init__(self, matrix):
        self.matrix = np.array(matrix, dtype=float)
        if self.matrix.ndim != 2 or self.matrix.shape[0] != self.matrix.shape[1]:
            raise DomainError(f"linear field needs a square matrix, got shape {self.matrix.shape}")

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    @property
    def is_linear(self) -> bool:
        return True

    def __call__(self, y):
        if isinstance(y, Jet):
            return y.matvec(self.matrix)
        return np.asarray(y) @ self.matrix.T

    def __repr__(self) -> str:
        return f"LinearField({self.matrix.tolist()})"


class SmoothField:
    """A field given by ``fn(x, ops)`` where ``ops`` supplies sin/cos/exp/stack.

    The same ``fn`` runs on plain arrays (``ArrayOps``) and on jets
    (``JetOps``); arithmetic (+, -, *) works on both natively.
    """

    def __init__(self, fn: Callable, dimension: int, name: str = "smooth"):
        self.fn = fn
        self._dimension = dimension
        self.name = name

    @property
    def dimension(self) -> int:
        return self._dimension

    @property
    def is_linear(self) -> bool:
        return False

    def __call__(self, y):
        if isinstance(y, Jet):
            return self.fn(y, JetOps)
        return self.fn(np.asarray(y, dtype=float), ArrayOps)

    def __repr__(self) -> str:
        return f"SmoothField({self.name})"


def _trig_field(x, ops):
    return ops.stack([ops.sin(x[..., 0]), ops.cos(x[..., 1]), x[..., 3], -ops.sin(x[..., 2])])


def trig_field() -> SmoothField:
    """The four-dimensional trigonometric field (sin x1, cos x2, x4, -sin x3)."""
    return SmoothField(_trig_field, 4, "trig-4d")


def constant_field(value: Sequence[float]) -> SmoothField:
    """A constant field, mainly for tests."""
    c = np.asarray(value, dtype=float)

    def fn(x, ops):
        zero = x[..., 0] * 0.0
        return ops.stack([zero + ci for ci in c])

    return SmoothField(fn, len(c), "constant")


FIELD_REGISTRY: dict[str, Callable[..., object]] = {
    "linear": lambda matrix: LinearField(matrix),
    "trig-4d": lambda: trig_field(),
    "constant": lambda value: constant_field(value),
}


def register_field(name: str, factory: Callable[..., object]) -> None:
    """Make ``factory(**params)`` available to configuration files as ``name``."""
    FIELD_REGISTRY[name] = factory


def field_from_json(spec: Mapping) -> LinearField | SmoothField:
    """Build a field from ``{"type": name, ...params}``.

    Args:
        spec: mapping with a ``type`` key naming a registry entry; other keys
            are passed to the factory.

    Returns:
        The constructed field.
    """
    spec = dict(spec)
    kind = spec.pop("type", None)
    if kind not in FIELD_REGISTRY:
        raise DomainError(f"unknown field type {kind!r}; known: {sorted(FIELD_REGISTRY)}")
    return FIELD_REGISTRY[kind](**spec)


def field_to_json(f) -> dict:
    if isinstance(f, LinearField):
        return {"type": "linear", "matrix": f.matrix.tolist()}
    if isinstance(f, SmoothField) and f.name in FIELD_REGISTRY and f.name != "constant":
        return {"type": f.name}
    raise DomainError(f"field {f!r} has no JSON form")


@dataclass(frozen=True)
class VectorFieldSet:
    """Drift, Wiener and jump fields sharing one state dimension.

    Args:
        drift: field attached to the time letter.
        wiener: fields for ``w1..wd`` in order.
        jumps: ``(JumpSpec, field)`` pairs; the JumpSpec supplies the size law.
    """

    drift: object
    wiener: tuple = ()
    jumps: tuple = ()
    _jump_tables: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "wiener", tuple(self.wiener))
        object.__setattr__(self, "jumps", tuple(self.jumps))
        dims = {f.dimension for f in self.all_fields}
        if len(dims) != 1:
            raise DomainError(f"fields disagree on dimension: {sorted(dims)}")
        for spec, _ in self.jumps:
            sizes = np.array([float(s) for s, _ in spec.sizes])
            weights = np.array([float(w) for _, w in spec.sizes])
            powers = spec.independent_powers
            b = np.array([[s**q for s in sizes] for q in powers])
            self._jump_tables[spec.index] = (sizes, weights, float(spec.intensity), np.linalg.inv(b), powers)

    @property
    def all_fields(self) -> list:
        return [self.drift, *self.wiener, *(f for _, f in self.jumps)]

    @property
    def dimension(self) -> int:
        return self.drift.dimension

    @property
    def is_linear(self) -> bool:
        return all(f.is_linear for f in self.all_fields)

    @property
    def alphabet(self) -> Alphabet:
        return Alphabet(len(self.wiener), [s for s, _ in self.jumps])

    def jump_field(self, index: int):
        for spec, f in self.jumps:
            if spec.index == index:
                return f
        raise DomainError(f"no field for jump index {index}")

    def letter_operator_matrix(self, a: Letter) -> np.ndarray:
        """Matrix of ``V~_a`` on linear maps (linear fields only)."""
        n = self.dimension
        if a.is_time:
            return self.drift.matrix
        if a.is_wiener:
            return self._wiener(a.index).matrix
        _, _, _, _, powers = self._jump_table(a.index)
        # sum_k Binv[k, q] s_k is 1 for the first power and 0 otherwise
        if a.power == powers[0] == 1:
            return self.jump_field(a.index).matrix
        return np.zeros((n, n))

    def _wiener(self, i: int):
        if not 1 <= i <= len(self.wiener):
            raise DomainError(f"no field for Wiener index {i}")
        return self.wiener[i - 1]

    def _jump_table(self, index: int):
        if index not in self._jump_tables:
            raise DomainError(f"no field for jump index {index}")
        return self._jump_tables[index]

    def to_json(self) -> dict:
        return {
            "drift": field_to_json(self.drift),
            "wiener": [field_to_json(f) for f in self.wiener],
            "jumps": [
                {
                    "index": s.index,
                    "intensity": str(s.intensity),
                    "sizes": [[str(v), str(w)] for v, w in s.sizes],
                    "field": field_to_json(f),
                }
                for s, f in self.jumps
            ],
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "VectorFieldSet":
        from fractions import Fraction

        jumps = []
        for j in data.get("jumps", []):
            sizes = tuple((Fraction(v), Fraction(w)) for v, w in j.get("sizes", [[1, 1]]))
            spec = JumpSpec(int(j["index"]), Fraction(j["intensity"]), sizes)
            jumps.append((spec, field_from_json(j["field"])))
        return cls(
            field_from_json(data["drift"]),
            tuple(field_from_json(w) for w in data.get("wiener", [])),
            tuple(jumps),
        )


# ---------------------------------------------------------------------------
# derivative budget
# ---------------------------------------------------------------------------
def derivative_order(w: Sequence[Letter], fields: VectorFieldSet) -> int:
    """Total jet degree needed to evaluate ``V~_w(id)``.

    A Wiener letter costs one derivative, the time letter two when a Wiener
    field is present (one otherwise), jump shifts cost nothing.
    """
    time_cost = 2 if fields.wiener else 1
    return sum(1 if a.is_wiener else time_cost if a.is_time else 0 for a in w)


def check_budget(w: Sequence[Letter], fields: VectorFieldSet, max_order: int = DEFAULT_MAX_ORDER) -> int:
    """Raise ``BudgetExceededError`` when ``w`` needs more than ``max_order`` derivatives.

    Linear field sets never differentiate and always pass.

    Returns:
        The derivative order the word needs.
    """
    k = derivative_order(w, fields)
    if not fields.is_linear and k > max_order:
        raise BudgetExceededError(
            f"word {format_word(w)} needs {k} derivatives, budget is {max_order}"
        )
    return k


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------
class _Node:
    __slots__ = ("end", "children", "suffixes", "_plan")

    def __init__(self):
        self.end = False
        self.children: dict[Letter, _Node] = {}
        self.suffixes: list[Word] = []
        self._plan = None


def _build_trie(words: Iterable[Word]) -> _Node:
    root = _Node()
    for w in words:
        node = root
        for a in w:
            node = node.children.setdefault(a, _Node())
        node.end = True
    _index_suffixes(root)
    return root


def _index_suffixes(node: _Node) -> list[Word]:
    out = [()] if node.end else []
    for a, child in node.children.items():
        out += [(a,) + s for s in _index_suffixes(child)]
    node.suffixes = out
    return out


def _union(nodes: Sequence[_Node]) -> _Node:
    """Trie holding every suffix of the given nodes."""
    if len(nodes) == 1:
        return nodes[0]
    words = {s for n in nodes for s in n.suffixes}
    return _build_trie(words)


class OperatorEngine:
    """Evaluate ``V~_w(id)`` for a fixed word set, sharing common work.

    Prefixes are shared through a trie.  At each node the letters that need
    the same perturbed state (a Wiener letter and the Ito part of the time
    letter, a jump letter and the compensator of the time letter) walk one
    merged sub-trie together.

    Args:
        fields: the vector fields.
        words: words to evaluate; letters must belong to ``fields.alphabet``.
        max_order: derivative budget for nonlinear fields.
    """

    def __init__(self, fields: VectorFieldSet, words: Iterable[Sequence[Letter]], max_order: int = DEFAULT_MAX_ORDER):
        self.fields = fields
        self.words = [tuple(w) for w in dict.fromkeys(tuple(w) for w in words)]
        alphabet = fields.alphabet
        for w in self.words:
            for a in w:
                alphabet.check_letter(a)
            check_budget(w, fields, max_order)
        self._trie = _build_trie(self.words)
        self._linear = fields.is_linear
        if self._linear:
            self._matrices = {a: fields.letter_operator_matrix(a) for a in alphabet.letters}

    def evaluate(self, y: np.ndarray) -> dict[Word, np.ndarray]:
        """Values ``V~_w(id)(y)`` for every word.

        Args:
            y: state of shape ``(N,)`` or ``(P, N)``.

        Returns:
            Mapping word -> array with the shape of ``y``.
        """
        y = np.asarray(y, dtype=float)
        if y.shape[-1] != self.fields.dimension:
            raise DomainError(f"state has dimension {y.shape[-1]}, fields expect {self.fields.dimension}")
        if self._linear:
            out: dict[Word, np.ndarray] = {}
            self._linear_walk(self._trie, y, (), out)
            return out
        res = self._walk(self._trie, Jet.constant(y))
        return {w: res[w].coef for w in self.words}

    # linear fast path: the first letter's matrix is applied first
    def _linear_walk(self, node: _Node, v: np.ndarray, prefix: Word, out: dict) -> None:
        if node.end:
            out[prefix] = v
        for a, child in node.children.items():
            self._linear_walk(child, v @ self._matrices[a].T, prefix + (a,), out)

    def _plan(self, node: _Node) -> dict:
        """Merged sub-tries for each perturbed state needed at ``node``."""
        if node._plan is not None:
            return node._plan
        f = self.fields
        time_child = next((c for a, c in node.children.items() if a.is_time), None)
        plan: dict = {"drift": time_child, "wiener": {}, "shift": {}, "base": None}
        for a, c in node.children.items():
            if a.is_wiener:
                plan["wiener"][a.index] = None
        for i in range(1, len(f.wiener) + 1):
            group = [c for a, c in node.children.items() if a.is_wiener and a.index == i]
            if time_child is not None:
                group.append(time_child)
            if group:
                cap = 2 if time_child is not None else 1
                plan["wiener"][i] = (_union(group), cap)
        base_group = []
        for spec, _ in f.jumps:
            group = [c for a, c in node.children.items() if a.is_jump and a.index == spec.index]
            if time_child is not None:
                group.append(time_child)
            if group:
                plan["shift"][spec.index] = _union(group)
                base_group += group
        if base_group:
            plan["base"] = _union(list({id(g): g for g in base_group}.values()))
        node._plan = plan
        return plan

    def _walk(self, node: _Node, y: Jet) -> dict[Word, Jet]:
        out: dict[Word, Jet] = {}
        if node.end:
            out[()] = y
        if not node.children:
            return out
        f = self.fields
        plan = self._plan(node)

        wiener_res = {}
        for i, entry in plan["wiener"].items():
            if entry is None:
                continue
            sub, cap = entry
            z = y.extend(cap)
            z = z + z.variable(f._wiener(i)(y))
            wiener_res[i] = self._walk(sub, z)
        base = self._walk(plan["base"], y) if plan["base"] is not None else None
        shift_res = {}
        for j, sub in plan["shift"].items():
            sizes = f._jump_table(j)[0]
            direction = f.jump_field(j)(y)
            shift_res[j] = [
                {s: v - base[s] for s, v in self._walk(sub, y + direction * float(sk)).items()} for sk in sizes
            ]

        for a, child in node.children.items():
            if a.is_wiener:
                res = wiener_res[a.index]
                vals = {s: res[s].take(1) for s in child.suffixes}
            elif a.is_jump:
                _, _, _, binv, powers = f._jump_table(a.index)
                coeffs = binv[:, powers.index(a.power)]
                diffs = shift_res[a.index]
                vals = {}
                for s in child.suffixes:
                    acc = None
                    for c_k, d in zip(coeffs, diffs):
                        if c_k != 0:
                            term = d[s] * float(c_k)
                            acc = term if acc is None else acc + term
                    vals[s] = acc if acc is not None else base[s] * 0.0
            else:
                drift = f.drift(y)
                for spec, jf in f.jumps:
                    drift = drift - jf(y) * float(spec.moment(1))
                z = y.extend(1)
                z = z + z.variable(drift)
                res = self._walk(child, z)
                vals = {s: res[s].take(1) for s in child.suffixes}
                for i, wres in wiener_res.items():
                    for s in child.suffixes:
                        vals[s] = vals[s] + wres[s].take(2)
                for spec, _ in f.jumps:
                    _, weights, lam, _, _ = f._jump_table(spec.index)
                    for w_k, d in zip(weights, shift_res[spec.index]):
                        for s in child.suffixes:
                            vals[s] = vals[s] + d[s] * (lam * float(w_k))
            for s, v in vals.items():
                out[(a,) + s] = v
        return out


def apply_word(
    w: Sequence[Letter], y: np.ndarray, fields: VectorFieldSet, max_order: int = DEFAULT_MAX_ORDER
) -> np.ndarray:
    """Return ``V~_w(id)(y)``.

    Args:
        w: word over ``fields.alphabet``; the empty word gives ``y``.
        y: state of shape ``(N,)`` or ``(P, N)``.
        fields: vector fields.
        max_order: derivative budget for nonlinear fields.

    Returns:
        Array with the shape of ``y``.
    """
    w = tuple(w)
    return OperatorEngine(fields, [w], max_order).evaluate(y)[w]


def taylor_shift_terms(
    index: int, w: Sequence[Letter], y: np.ndarray, fields: VectorFieldSet, max_power: int = 4
) -> list[np.ndarray]:
    """Taylor coefficients of ``v -> G(y + v V_j(y))`` with ``G = V~_w(id)``.

    Entry ``m-1`` is the power-bracket operator of order ``m`` applied to
    ``G``, i.e. ``(1/m!) D^m G [V_j, ..., V_j]``.

    Args:
        index: jump index ``j``.
        w: word defining ``G`` (empty word: identity).
        y: state.
        fields: vector fields.
        max_power: highest Taylor order.

    Returns:
        List of ``max_power`` arrays.
    """
    engine = OperatorEngine(fields, [tuple(w)], max_order=10**6)
    y0 = Jet.constant(np.asarray(y, dtype=float))
    z = y0.extend(max_power)
    z = z + z.variable(fields.jump_field(index)(y0))
    g = engine._walk(engine._trie, z)[tuple(w)]
    return [g.take(m).coef for m in range(1, max_power + 1)]


# ---------------------------------------------------------------------------
# jet validation against finite differences
# ---------------------------------------------------------------------------
FD_STEPS = (1e-3, 1e-4, 1e-5)


@dataclass
class JetCheck:
    field_name: str
    order: int
    jet_norm: float
    errors: tuple[float, ...]
    passed: bool
    mode: str


@dataclass
class JetReport:
    checks: list[JetCheck]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __str__(self) -> str:
        lines = []
        for c in self.checks:
            errs = ", ".join(f"{e:.2e}" for e in c.errors)
            lines.append(
                f"{'PASS' if c.passed else 'FAIL'} {c.field_name} order {c.order} ({c.mode}): |jet|={c.jet_norm:.3e} rel errors [{errs}]"
            )
        return "\n".join(lines)


def mixed_derivative_jet(f, y: np.ndarray, directions: Sequence[np.ndarray]) -> np.ndarray:
    """``D^k f(y)[u_1, ..., u_k]`` from a jet with one degree-1 variable per direction."""
    z = Jet.constant(np.asarray(y, dtype=float))
    for u in directions:
        z = z.extend(1)
        z = z + z.variable(np.asarray(u, dtype=float))
    out = f(z)
    for _ in directions:
        out = out.take(1)
    return out.coef


def mixed_derivative_fd(f, y: np.ndarray, directions: Sequence[np.ndarray], step: float) -> np.ndarray:
    """Central finite-difference estimate of ``D^k f(y)[u_1, ..., u_k]``."""
    y = np.asarray(y, dtype=float)
    k = len(directions)
    total = np.zeros_like(np.asarray(f(y), dtype=float))
    for signs in itertools.product((1.0, -1.0), repeat=k):
        point = y + step * sum(s * np.asarray(u, dtype=float) for s, u in zip(signs, directions))
        total = total + np.prod(signs) * f(point)
    return total / (2.0 * step) ** k


def jet_validate(
    fields: VectorFieldSet | Sequence,
    y: np.ndarray,
    order: int = 2,
    tolerance: float = 1e-6,
    seed: int = 0,
) -> JetReport:
    """Compare jet derivatives of each field with central finite differences.

    Orders up to 2 pass when the best relative error over ``FD_STEPS`` is at
    most ``tolerance``.  At orders 3 and 4 round-off swamps the smaller steps,
    so each error must instead sit under the central-difference error model
    ``10 h^2 + 100 eps / h^k`` and the best one must be below ``1e-3``.

    Args:
        fields: a ``VectorFieldSet`` or a list of fields.
        y: evaluation point.
        order: highest derivative order (at most 4).
        tolerance: relative tolerance for orders <= 2.
        seed: seed for the random unit directions.

    Returns:
        A ``JetReport``.
    """
    if order > 4:
        raise DomainError("jet_validate supports orders up to 4")
    flist = fields.all_fields if isinstance(fields, VectorFieldSet) else list(fields)
    y = np.asarray(y, dtype=float)
    rng = np.random.default_rng(seed)
    checks = []
    for n, f in enumerate(flist):
        name = f"field[{n}]:{getattr(f, 'name', 'linear')}"
        scale = max(float(np.max(np.abs(f(y)))), 1e-300)
        for k in range(1, order + 1):
            dirs = [u / np.linalg.norm(u) for u in rng.standard_normal((k, y.shape[-1]))]
            exact = mixed_derivative_jet(f, y, dirs)
            denom = max(float(np.max(np.abs(exact))), scale)
            errs = tuple(
                float(np.max(np.abs(mixed_derivative_fd(f, y, dirs, h) - exact))) / denom for h in FD_STEPS
            )
            if k <= 2:
                ok, mode = min(errs) <= tolerance, "tolerance"
            else:
                eps = np.finfo(float).eps
                model = all(e <= 10 * h**2 + 100 * eps / h**k for e, h in zip(errs, FD_STEPS))
                ok, mode = model and min(errs) <= 1e-3, "error-model"
            checks.append(JetCheck(name, k, float(np.max(np.abs(exact))), errs, bool(ok), mode))
    return JetReport(checks)
