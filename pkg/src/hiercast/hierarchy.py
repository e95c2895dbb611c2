"""Aggregation hierarchy, summing matrix, and aligned observation panel.

All vectors and matrices in the toolkit follow the canonical node ordering:
by level, then lexicographic node id.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class Hierarchy:
    """A strictly nested aggregation tree.

    ``node_ids``, ``parent_ids`` and ``levels`` are parallel tuples in
    canonical order (level, then lexicographic node id).
    """

    node_ids: tuple
    parent_ids: tuple
    levels: tuple

    @classmethod
    def from_nodes(cls, nodes):
        """Build from an iterable of (node_id, parent_id, level) triples.

        parent_id may be None or "" for the root.  Raises DataError on a
        malformed structure, naming the offending node.
        """
        cleaned = []
        for node_id, parent_id, level in nodes:
            if parent_id in ("", None):
                parent_id = None
            cleaned.append((str(node_id), parent_id, int(level)))
        cleaned.sort(key=lambda n: (n[2], n[0]))
        ids = [n[0] for n in cleaned]
        if len(set(ids)) != len(ids):
            dup = sorted({i for i in ids if ids.count(i) > 1})[0]
            raise DataError(f"duplicate node id {dup!r}")
        by_id = {n[0]: n for n in cleaned}
        roots = [n for n in cleaned if n[1] is None]
        if len(roots) != 1 or roots[0][2] != 0:
            raise DataError("hierarchy must have exactly one root at level 0")
        levels = sorted({n[2] for n in cleaned})
        if levels != list(range(len(levels))):
            raise DataError(f"level gap in hierarchy: levels present {levels}")
        for node_id, parent_id, level in cleaned:
            if parent_id is None:
                continue
            if parent_id not in by_id:
                raise DataError(f"node {node_id!r} has unknown parent {parent_id!r}")
            if by_id[parent_id][2] != level - 1:
                raise DataError(
                    f"node {node_id!r} at level {level} has parent "
                    f"{parent_id!r} at level {by_id[parent_id][2]}"
                )
        h = cls(
            node_ids=tuple(n[0] for n in cleaned),
            parent_ids=tuple(n[1] for n in cleaned),
            levels=tuple(n[2] for n in cleaned),
        )
        # every non-leaf node must actually have children
        for node_id, level in zip(h.node_ids, h.levels):
            if level < h.K - 1 and not h.children(node_id):
                raise DataError(f"interior node {node_id!r} has no children")
        return h

    @property
    def K(self):
        return self.levels[-1] + 1

    @property
    def M(self):
        return len(self.node_ids)

    @property
    def m_k(self):
        counts = [0] * self.K
        for lv in self.levels:
            counts[lv] += 1
        return counts

    def index(self, node_id):
        try:
            return self.node_ids.index(node_id)
        except ValueError:
            raise DataError(f"unknown node id {node_id!r}") from None

    def level_ids(self, level):
        return [n for n, lv in zip(self.node_ids, self.levels) if lv == level]

    @property
    def root_id(self):
        return self.node_ids[0]

    @property
    def bottom_ids(self):
        return self.level_ids(self.K - 1)

    def parent(self, node_id):
        return self.parent_ids[self.index(node_id)]

    def children(self, node_id):
        return [n for n, p in zip(self.node_ids, self.parent_ids) if p == node_id]

    def descendants_at_bottom(self, node_id):
        lv = self.levels[self.index(node_id)]
        front = [node_id]
        for _ in range(self.K - 1 - lv):
            front = [c for n in front for c in self.children(n)]
        return front

    def subtree(self, node_id):
        """All nodes below (and including) node_id, canonical order."""
        keep = {node_id}
        for n, p in zip(self.node_ids, self.parent_ids):
            if p in keep:
                keep.add(n)
        return [n for n in self.node_ids if n in keep]


@dataclass(frozen=True)
class SummingMatrix:
    """Dense 0/1 matrix mapping bottom-level series to every series."""

    entries: np.ndarray            # (M, m_bottom) float64
    row_index: tuple               # node ids, canonical order
    col_index: tuple               # bottom node ids, canonical order
    child_rows: tuple              # per row: tuple of child row positions

    @property
    def M(self):
        return self.entries.shape[0]

    @property
    def m_bottom(self):
        return self.entries.shape[1]


def build_summing_matrix(h: Hierarchy) -> SummingMatrix:
    bottom = h.bottom_ids
    col_of = {n: j for j, n in enumerate(bottom)}
    S = np.zeros((h.M, len(bottom)))
    for i, node_id in enumerate(h.node_ids):
        for leaf in h.descendants_at_bottom(node_id):
            S[i, col_of[leaf]] = 1.0
    row_of = {n: i for i, n in enumerate(h.node_ids)}
    child_rows = tuple(
        tuple(row_of[c] for c in h.children(n)) for n in h.node_ids
    )
    return SummingMatrix(
        entries=S,
        row_index=tuple(h.node_ids),
        col_index=tuple(bottom),
        child_rows=child_rows,
    )


def aggregate(S: SummingMatrix, bottom: np.ndarray) -> np.ndarray:
    """Map bottom-level rows (T, m_bottom) to all-series rows (T, M)."""
    bottom = np.asarray(bottom, dtype=float)
    if bottom.ndim != 2 or bottom.shape[1] != S.m_bottom:
        raise DataError(
            f"expected bottom matrix with {S.m_bottom} columns, "
            f"got shape {bottom.shape}"
        )
    return bottom @ S.entries.T


def coherence_violation(S: SummingMatrix, forecasts: np.ndarray) -> float:
    """Max |node value - sum of its direct children| over all steps."""
    forecasts = np.asarray(forecasts, dtype=float)
    if forecasts.ndim == 1:
        forecasts = forecasts[None, :]
    if forecasts.shape[1] != S.M:
        raise DataError(
            f"expected forecasts with {S.M} columns, got shape {forecasts.shape}"
        )
    if not np.all(np.isfinite(forecasts)):
        raise DataError("forecasts contain non-finite values")
    worst = 0.0
    for i, kids in enumerate(S.child_rows):
        if not kids:
            continue
        gap = np.abs(forecasts[:, i] - forecasts[:, list(kids)].sum(axis=1))
        worst = max(worst, float(gap.max()))
    return worst


# ---------------------------------------------------------------------------
# Observation panel
# ---------------------------------------------------------------------------

_CAL_DEFAULT = ("dow", "month")


def calendar_matrix(timestamps, kinds=_CAL_DEFAULT):
    """One-hot calendar dummies (first category dropped per kind).

    Supported kinds: "dow" (6 columns, Monday dropped), "month" (11 columns,
    January dropped), "hour" (23 columns, hour 0 dropped).
    """
    ts = np.asarray(timestamps, dtype="datetime64[s]")
    names, cols = [], []
    for kind in kinds:
        if kind == "dow":
            idx = (ts.astype("datetime64[D]").view("int64") + 3) % 7
            cats = range(1, 7)
        elif kind == "month":
            idx = ts.astype("datetime64[M]").view("int64") % 12 + 1
            cats = range(2, 13)
        elif kind == "hour":
            idx = (ts.view("int64") // 3600) % 24
            cats = range(1, 24)
        else:
            raise DataError(f"unknown calendar feature {kind!r}")
        for c in cats:
            names.append(f"{kind}_{c}")
            cols.append((idx == c).astype(float))
    if not cols:
        return [], np.zeros((len(ts), 0))
    return names, np.column_stack(cols)


@dataclass
class SeriesPanel:
    """Aligned observations for every node plus per-node exogenous columns."""

    hierarchy: Hierarchy
    timestamps: np.ndarray                 # datetime64[s], strictly increasing
    values: np.ndarray                     # (T, M), canonical node order
    exog: dict = field(default_factory=dict)   # node_id -> (names, (T, d))
    calendar: tuple = _CAL_DEFAULT
    eps_data: float = 1e-6

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype="datetime64[s]")
        self.values = np.asarray(self.values, dtype=float)
        T = len(self.timestamps)
        if self.values.shape != (T, self.hierarchy.M):
            raise DataError(
                f"values shape {self.values.shape} does not match "
                f"{T} timestamps x {self.hierarchy.M} nodes"
            )
        if T > 1 and not np.all(np.diff(self.timestamps.view("int64")) > 0):
            raise DataError("timestamps must be strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise DataError("observations contain non-finite values")
        S = build_summing_matrix(self.hierarchy)
        gap = coherence_violation(S, self.values)
        if gap > self.eps_data:
            raise DataError(
                f"observed data violates aggregation constraints by {gap:.3g} "
                f"(limit {self.eps_data:.3g})"
            )
        for node_id, (names, mat) in self.exog.items():
            mat = np.asarray(mat, dtype=float)
            if mat.shape != (T, len(names)):
                raise DataError(
                    f"exog for node {node_id!r} has shape {mat.shape}, "
                    f"expected ({T}, {len(names)})"
                )
            if not np.all(np.isfinite(mat)):
                raise DataError(f"exog for node {node_id!r} has non-finite values")
            self.exog[node_id] = (list(names), mat)

    @property
    def T(self):
        return len(self.timestamps)

    def series(self, node_id):
        return self.values[:, self.hierarchy.index(node_id)]

    def exog_for(self, node_id):
        """Exogenous matrix for a node.

        Interior nodes without their own columns inherit the mean of their
        bottom descendants' columns (a 0/1 promotion flag becomes the
        fraction of descendants in promotion).
        """
        if node_id in self.exog:
            return self.exog[node_id]
        leaves = [n for n in self.hierarchy.descendants_at_bottom(node_id)
                  if n in self.exog]
        if not leaves:
            return [], np.zeros((self.T, 0))
        names = self.exog[leaves[0]][0]
        for n in leaves[1:]:
            if self.exog[n][0] != names:
                raise DataError(
                    f"cannot aggregate exog under {node_id!r}: descendants "
                    "carry different variable sets"
                )
        stacked = np.stack([self.exog[n][1] for n in leaves])
        return list(names), stacked.mean(axis=0)

    def calendar_features(self):
        return calendar_matrix(self.timestamps, self.calendar)

    def slice_rows(self, start, stop):
        exog = {n: (names, mat[start:stop]) for n, (names, mat) in self.exog.items()}
        return SeriesPanel(
            hierarchy=self.hierarchy,
            timestamps=self.timestamps[start:stop],
            values=self.values[start:stop],
            exog=exog,
            calendar=self.calendar,
            eps_data=self.eps_data,
        )


# ---------------------------------------------------------------------------
# CSV interfaces
# ---------------------------------------------------------------------------

def _parse_ts(token):
    try:
        return np.datetime64(token).astype("datetime64[s]")
    except ValueError:
        raise DataError(f"unparseable timestamp {token!r}") from None


def format_timestamp(ts, date_only):
    ts = np.datetime64(ts, "s")
    return str(ts.astype("datetime64[D]")) if date_only else str(ts)


def timestamps_are_dates(timestamps):
    ts = np.asarray(timestamps, dtype="datetime64[s]")
    return bool(np.all(ts == ts.astype("datetime64[D]").astype("datetime64[s]")))


def load_hierarchy(path) -> Hierarchy:
    """Read a hierarchy CSV with header node_id,parent_id,level."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"node_id", "parent_id", "level"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise DataError(f"{path}: expected header node_id,parent_id,level")
        nodes = [(row["node_id"], row["parent_id"], row["level"]) for row in reader]
    if not nodes:
        raise DataError(f"{path}: empty hierarchy file")
    return Hierarchy.from_nodes(nodes)


def load_panel(hierarchy, obs_path, exog_path=None, calendar=_CAL_DEFAULT,
               eps_data=1e-6) -> SeriesPanel:
    """Read long-format observation (and optional exogenous) CSVs."""
    cells = {}
    stamps = {}
    with open(obs_path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"timestamp", "node_id", "value"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise DataError(f"{obs_path}: expected header timestamp,node_id,value")
        for row in reader:
            ts = _parse_ts(row["timestamp"])
            stamps[str(ts)] = ts
            cells[(str(ts), row["node_id"])] = float(row["value"])
    timestamps = np.array(sorted(stamps.values()), dtype="datetime64[s]")
    T = len(timestamps)
    values = np.empty((T, hierarchy.M))
    for t, ts in enumerate(timestamps):
        for j, node_id in enumerate(hierarchy.node_ids):
            key = (str(ts), node_id)
            if key not in cells:
                raise DataError(
                    f"{obs_path}: missing observation for node {node_id!r} "
                    f"at {ts}"
                )
            values[t, j] = cells[key]

    exog = {}
    if exog_path is not None:
        raw = {}
        with open(exog_path, newline="") as fh:
            reader = csv.DictReader(fh)
            required = {"timestamp", "node_id", "variable", "value"}
            if reader.fieldnames is None or not required.issubset(reader.fieldnames):
                raise DataError(
                    f"{exog_path}: expected header timestamp,node_id,variable,value"
                )
            for row in reader:
                ts = str(_parse_ts(row["timestamp"]))
                raw.setdefault(row["node_id"], {})[(ts, row["variable"])] = float(
                    row["value"]
                )
        for node_id, cells_n in raw.items():
            names = sorted({var for _, var in cells_n})
            mat = np.empty((T, len(names)))
            for t, ts in enumerate(timestamps):
                for j, var in enumerate(names):
                    key = (str(ts), var)
                    if key not in cells_n:
                        raise DataError(
                            f"{exog_path}: missing {var!r} for node {node_id!r} "
                            f"at {ts}"
                        )
                    mat[t, j] = cells_n[key]
            exog[node_id] = (names, mat)

    return SeriesPanel(
        hierarchy=hierarchy,
        timestamps=timestamps,
        values=values,
        exog=exog,
        calendar=calendar,
        eps_data=eps_data,
    )


def write_hierarchy(hierarchy, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["node_id", "parent_id", "level"])
        for node_id, parent_id, level in zip(
            hierarchy.node_ids, hierarchy.parent_ids, hierarchy.levels
        ):
            writer.writerow([node_id, parent_id or "", level])


def write_observations(panel, path):
    date_only = timestamps_are_dates(panel.timestamps)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp", "node_id", "value"])
        for t, ts in enumerate(panel.timestamps):
            stamp = format_timestamp(ts, date_only)
            for j, node_id in enumerate(panel.hierarchy.node_ids):
                writer.writerow([stamp, node_id, repr(float(panel.values[t, j]))])


def write_exog(panel, path):
    date_only = timestamps_are_dates(panel.timestamps)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp", "node_id", "variable", "value"])
        for node_id in sorted(panel.exog):
            names, mat = panel.exog[node_id]
            for t, ts in enumerate(panel.timestamps):
                stamp = format_timestamp(ts, date_only)
                for j, var in enumerate(names):
                    writer.writerow([stamp, node_id, var, repr(float(mat[t, j]))])
