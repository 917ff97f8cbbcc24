"""Dataset files, policy manifests, report artifacts and the external-policy protocol.

Dataset files are line-delimited JSON: one header line
``{"version": 1, "action_space": {"kind": ..., "n": ...}}`` followed by one
trajectory per line. See FORMAT.md for the exact schemas.
"""

from __future__ import annotations

import csv
import io as _io
import json
import os
import queue
import shlex
import subprocess
import sys
import tempfile
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from .analysis import PairwiseMatrix, RankingReport
from .core import ActionSpace, ConstantPolicy, ExpertDataset, Policy, Trajectory
from .errors import ActionSpaceError, DatasetFormatError, ExternalPolicyError, PoprError, ValidationError
from .sampler import PosteriorSamples
from .toyenv import MixturePolicySpec, expert_policy, mixture_policy

DATASET_VERSION = 1
REPORT_VERSION = 1
PROTOCOL_VERSION = 1


# --------------------------------------------------------------------------
# atomic writes


def atomic_write_text(path, text: str) -> Path:
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise
    return path


# --------------------------------------------------------------------------
# datasets


def _num_list(a: np.ndarray) -> list:
    return [float(x) for x in np.asarray(a).reshape(-1)]


def _trajectory_record(traj: Trajectory, discrete: bool) -> dict:
    steps = []
    for t in range(len(traj)):
        a = int(traj.actions[t]) if discrete else _num_list(traj.actions[t])
        r = None if traj.rewards is None else float(traj.rewards[t])
        steps.append({"s": _num_list(traj.states[t]), "a": a, "r": r, "s2": _num_list(traj.next_states[t])})
    return {"steps": steps, "meta": traj.meta}


def dumps_dataset(dataset: ExpertDataset) -> str:
    header: dict[str, Any] = {"version": DATASET_VERSION, "action_space": dataset.action_space.to_dict()}
    if dataset.meta:
        header["meta"] = dataset.meta
    lines = [json.dumps(header, separators=(",", ":"))]
    discrete = dataset.action_space.is_discrete
    for traj in dataset:
        lines.append(json.dumps(_trajectory_record(traj, discrete), separators=(",", ":")))
    return "\n".join(lines) + "\n"


def write_dataset(dataset: ExpertDataset, path) -> Path:
    return atomic_write_text(path, dumps_dataset(dataset))


def _parse_header(line: str, path) -> tuple[ActionSpace, dict]:
    try:
        header = json.loads(line)
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"header is not valid JSON: {exc.msg}", 1, path) from None
    if not isinstance(header, dict) or "version" not in header or "action_space" not in header:
        raise DatasetFormatError("missing header line with 'version' and 'action_space'", 1, path)
    if header["version"] != DATASET_VERSION:
        raise DatasetFormatError(f"unsupported dataset version {header['version']!r}", 1, path)
    try:
        space = ActionSpace.from_dict(header["action_space"])
    except (KeyError, TypeError, ValueError, ValidationError) as exc:
        raise DatasetFormatError(f"bad action_space: {exc}", 1, path) from None
    return space, dict(header.get("meta") or {})


def _parse_record(line: str, lineno: int, space: ActionSpace, path) -> Trajectory:
    try:
        rec = json.loads(line)
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"invalid JSON: {exc.msg}", lineno, path) from None
    if not isinstance(rec, dict) or not isinstance(rec.get("steps"), list) or not rec["steps"]:
        raise DatasetFormatError("record needs a non-empty 'steps' list", lineno, path)
    states, actions, rewards, nexts = [], [], [], []
    for i, step in enumerate(rec["steps"]):
        if not isinstance(step, dict) or not {"s", "a", "s2"} <= step.keys():
            raise DatasetFormatError(f"step {i} needs keys 's', 'a', 's2'", lineno, path)
        a = step["a"]
        if space.is_discrete:
            if isinstance(a, bool) or not isinstance(a, int):
                raise DatasetFormatError(f"step {i}: discrete action must be an integer, got {a!r}", lineno, path)
            if not 0 <= a < space.n:
                raise DatasetFormatError(f"step {i}: action index {a} outside [0, {space.n})", lineno, path)
        elif not isinstance(a, list) or len(a) != space.n:
            raise DatasetFormatError(f"step {i}: continuous action must be a list of {space.n} numbers", lineno, path)
        r = step.get("r")
        if r is not None and (isinstance(r, bool) or not isinstance(r, (int, float))):
            raise DatasetFormatError(f"step {i}: reward must be a number or null", lineno, path)
        states.append(step["s"])
        actions.append(a)
        rewards.append(r)
        nexts.append(step["s2"])
    has = [r is not None for r in rewards]
    if any(has) and not all(has):
        raise DatasetFormatError("rewards must be present on every step or on none", lineno, path)
    try:
        return Trajectory(
            states=np.asarray(states, dtype=float),
            actions=np.asarray(actions, dtype=np.int64 if space.is_discrete else float),
            next_states=np.asarray(nexts, dtype=float),
            rewards=np.asarray(rewards, dtype=float) if all(has) else None,
            meta=rec.get("meta") or {},
        )
    except (ValueError, TypeError, PoprError) as exc:
        raise DatasetFormatError(str(exc), lineno, path) from None


def loads_dataset(text: str, path=None) -> ExpertDataset:
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise DatasetFormatError("missing header line", 1, path)
    space, meta = _parse_header(lines[0], path)
    trajs = []
    dim = None
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        traj = _parse_record(line, lineno, space, path)
        if dim is None:
            dim = traj.state_dim
        elif traj.state_dim != dim:
            raise DatasetFormatError(f"state dimension {traj.state_dim} differs from {dim}", lineno, path)
        trajs.append(traj)
    if not trajs:
        raise DatasetFormatError("dataset contains no trajectories", len(lines) + 1, path)
    return ExpertDataset(trajs, space, meta)


def read_dataset(path) -> ExpertDataset:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DatasetFormatError(f"cannot read dataset: {exc.strerror}", None, str(path)) from None
    return loads_dataset(text, str(path))


# --------------------------------------------------------------------------
# external policies


class _LineReader(threading.Thread):
    def __init__(self, stream):
        super().__init__(daemon=True)
        self.stream = stream
        self.lines: queue.Queue = queue.Queue()

    def run(self):
        try:
            for line in iter(self.stream.readline, ""):
                self.lines.put(line)
        except (ValueError, OSError):
            pass
        finally:
            self.lines.put(None)


class ExternalPolicy(Policy):
    """A policy served by a subprocess over a line-delimited JSON protocol.

    The client sends ``{"protocol": 1, "action_space": {...}}`` and expects the
    same object back. Each query then writes ``{"state": [...]}`` and reads
    ``{"action": ...}``. The process is terminated on :meth:`close`.
    """

    def __init__(self, command, action_space: ActionSpace, policy_id: str = "external",
                 timeout: float = 10.0, state_dim: int | None = None, cwd=None, env=None):
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self.action_space = action_space
        self.policy_id = policy_id
        self.timeout = float(timeout)
        self.state_dim = state_dim
        self._cwd = cwd
        self._env = env
        self._lock = threading.Lock()
        self._proc: subprocess.Popen | None = None
        self._reader: _LineReader | None = None
        self._start()

    def _start(self) -> None:
        try:
            self._proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
                text=True,
                encoding="utf-8",
                bufsize=1,
                cwd=self._cwd,
                env=self._env,
            )
        except OSError as exc:
            raise ExternalPolicyError(f"{self.policy_id}: cannot spawn {self.command!r}: {exc}") from None
        self._reader = _LineReader(self._proc.stdout)
        self._reader.start()
        try:
            reply = self._exchange({"protocol": PROTOCOL_VERSION, "action_space": self.action_space.to_dict()})
            if reply.get("protocol") != PROTOCOL_VERSION:
                raise ExternalPolicyError(f"{self.policy_id}: unsupported protocol {reply.get('protocol')!r}")
            try:
                theirs = ActionSpace.from_dict(reply.get("action_space") or {})
            except (KeyError, TypeError, ValueError, ValidationError):
                raise ExternalPolicyError(f"{self.policy_id}: malformed handshake {reply!r}") from None
            if theirs != self.action_space:
                raise ExternalPolicyError(
                    f"{self.policy_id}: handshake action space {theirs} does not match {self.action_space}"
                )
        except BaseException:
            self.close()
            raise

    def _exchange(self, message: dict) -> dict:
        proc = self._proc
        if proc is None or proc.poll() is not None:
            raise ExternalPolicyError(f"{self.policy_id}: process is not running")
        try:
            proc.stdin.write(json.dumps(message, separators=(",", ":")) + "\n")
            proc.stdin.flush()
        except (BrokenPipeError, OSError, ValueError) as exc:
            raise ExternalPolicyError(f"{self.policy_id}: write failed: {exc}") from None
        try:
            line = self._reader.lines.get(timeout=self.timeout)
        except queue.Empty:
            raise ExternalPolicyError(f"{self.policy_id}: no response within {self.timeout:g}s") from None
        if line is None:
            raise ExternalPolicyError(f"{self.policy_id}: process closed its output")
        try:
            reply = json.loads(line)
        except json.JSONDecodeError:
            raise ExternalPolicyError(f"{self.policy_id}: malformed response {line.strip()[:200]!r}") from None
        if not isinstance(reply, dict):
            raise ExternalPolicyError(f"{self.policy_id}: response is not a JSON object")
        return reply

    def act(self, state, rng=None):
        state = np.asarray(state, dtype=float).reshape(-1)
        with self._lock:
            reply = self._exchange({"state": [float(x) for x in state]})
        if "action" not in reply:
            raise ExternalPolicyError(f"{self.policy_id}: response lacks 'action': {reply!r}")
        a = reply["action"]
        try:
            if self.action_space.is_discrete:
                if isinstance(a, bool) or not isinstance(a, int):
                    raise ActionSpaceError(f"expected integer action, got {a!r}")
                self.action_space.validate_actions(np.array([a]))
                return a
            return self.action_space.validate_actions(np.asarray([a], dtype=float))[0]
        except (ActionSpaceError, ValueError, TypeError) as exc:
            raise ExternalPolicyError(f"{self.policy_id}: invalid action: {exc}") from None

    def clone(self) -> "ExternalPolicy":
        return ExternalPolicy(self.command, self.action_space, self.policy_id, self.timeout,
                              self.state_dim, self._cwd, self._env)

    def close(self) -> None:
        proc, self._proc = self._proc, None
        if proc is None:
            return
        for stream in (proc.stdin,):
            try:
                stream.close()
            except (OSError, ValueError):
                pass
        try:
            proc.terminate()
            proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.wait()
        if self._reader is not None:
            self._reader.join(timeout=5)
        try:
            proc.stdout.close()
        except (OSError, ValueError):
            pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def __del__(self):
        try:
            self.close()
        except Exception:
            pass


def external_policy_client(command, action_space: ActionSpace, timeout: float = 10.0,
                           policy_id: str = "external", **kwargs) -> ExternalPolicy:
    return ExternalPolicy(command, action_space, policy_id=policy_id, timeout=timeout, **kwargs)


def serve_policy(fn: Callable[[np.ndarray], Any], action_space: ActionSpace, stdin=None, stdout=None) -> None:
    """Serve ``fn`` over the external-policy protocol until stdin closes.

    Intended for the policy side: ``python my_policy.py`` calling this at the end.
    """
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    handshake_done = False
    for line in stdin:
        msg = json.loads(line)
        if not handshake_done:
            reply = {"protocol": PROTOCOL_VERSION, "action_space": action_space.to_dict()}
            handshake_done = True
        else:
            a = fn(np.asarray(msg["state"], dtype=float))
            reply = {"action": int(a) if action_space.is_discrete else [float(x) for x in np.ravel(a)]}
        stdout.write(json.dumps(reply) + "\n")
        stdout.flush()


# --------------------------------------------------------------------------
# policy manifests


POLICY_KINDS = ("toy-expert", "toy-mixture", "constant", "external")


@dataclass(frozen=True)
class PolicyEntry:
    id: str
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValidationError(f"policy {self.id!r}: unknown kind {self.kind!r} (expected one of {POLICY_KINDS})")
        if self.kind == "external":
            if "command" not in self.params:
                raise ValidationError(f"external policy {self.id!r} needs a 'command'")
            if "timeout" not in self.params:
                raise ValidationError(f"external policy {self.id!r} needs a handshake 'timeout'")

    def to_dict(self) -> dict:
        return {"id": self.id, "kind": self.kind, "params": dict(self.params)}


def parse_manifest(data) -> list[PolicyEntry]:
    items = data.get("policies") if isinstance(data, dict) else data
    if not isinstance(items, list) or not items:
        raise ValidationError("manifest needs a non-empty 'policies' list")
    entries = []
    for i, item in enumerate(items):
        if not isinstance(item, dict) or "id" not in item or "kind" not in item:
            raise ValidationError(f"manifest entry {i} needs 'id' and 'kind'")
        entries.append(PolicyEntry(str(item["id"]), str(item["kind"]), dict(item.get("params") or {})))
    ids = [e.id for e in entries]
    dupes = sorted({x for x in ids if ids.count(x) > 1})
    if dupes:
        raise ValidationError(f"duplicate policy ids in manifest: {dupes}")
    return entries


def read_manifest(path) -> list[PolicyEntry]:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ValidationError(f"cannot read manifest {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"manifest {path} is not valid JSON: {exc.msg} (line {exc.lineno})") from None
    return parse_manifest(data)


def write_manifest(entries: Sequence[PolicyEntry], path) -> Path:
    return atomic_write_text(path, json.dumps({"policies": [e.to_dict() for e in entries]}, indent=2) + "\n")


def build_policy(entry: PolicyEntry, action_space: ActionSpace, n_states: int = 10,
                 state_dim: int | None = None) -> Policy:
    p = entry.params
    if entry.kind == "toy-expert":
        return expert_policy(int(p.get("n_states", n_states)), policy_id=entry.id)
    if entry.kind == "toy-mixture":
        spec = MixturePolicySpec(float(p["epsilon"]), int(p.get("seed", 0)))
        return mixture_policy(spec, int(p.get("n_states", n_states)), policy_id=entry.id)
    if entry.kind == "constant":
        return ConstantPolicy(p.get("action", 0), action_space, policy_id=entry.id, state_dim=state_dim)
    return ExternalPolicy(p["command"], action_space, policy_id=entry.id, timeout=float(p["timeout"]),
                          state_dim=state_dim, cwd=p.get("cwd"))


def build_policies(entries: Iterable[PolicyEntry], dataset: ExpertDataset) -> list[Policy]:
    n_states = int(dataset.meta.get("n_states", 10))
    built: list[Policy] = []
    try:
        for e in entries:
            built.append(build_policy(e, dataset.action_space, n_states, dataset.state_dim))
    except BaseException:
        for p in built:
            p.close()
        raise
    return built


# --------------------------------------------------------------------------
# reports


def _csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def samples_to_dict(s: PosteriorSamples) -> dict:
    return {
        "policy_id": s.policy_id,
        "samples": [float(x) for x in s.samples],
        "acceptance_rate": s.acceptance_rate,
        "config_fingerprint": s.config_fingerprint,
        "mean": s.mean,
        "std": s.std,
    }


def samples_from_dict(d: dict) -> PosteriorSamples:
    return PosteriorSamples(d["policy_id"], np.asarray(d["samples"], dtype=float),
                            float(d["acceptance_rate"]), d.get("config_fingerprint", ""))


def _payload(obj) -> tuple[str, Any]:
    if isinstance(obj, RankingReport):
        return "ranking", obj.to_dict()
    if isinstance(obj, PairwiseMatrix):
        return "pairwise", obj.to_dict()
    if isinstance(obj, PosteriorSamples):
        return "samples", [samples_to_dict(obj)]
    if isinstance(obj, (list, tuple)) and obj and all(isinstance(s, PosteriorSamples) for s in obj):
        return "samples", [samples_to_dict(s) for s in obj]
    raise ValidationError(f"cannot write report for {type(obj).__name__}")


def report_json(obj, provenance: dict | None = None) -> str:
    kind, data = _payload(obj)
    doc = {"schema": f"popr.{kind}", "version": REPORT_VERSION, "data": data}
    if provenance is not None:
        doc["provenance"] = provenance
    return json.dumps(doc, indent=2, sort_keys=False) + "\n"


def report_csv(obj) -> str:
    if isinstance(obj, RankingReport):
        rows = [
            (i + 1, pid, repr(obj.scores[pid]), repr(obj.spread[pid]) if pid in obj.spread else "",
             obj.tail_sizes.get(pid, ""))
            for i, pid in enumerate(obj.ordering)
        ]
        return _csv_text(["rank", "policy_id", "score", "posterior_std", "n_used"], rows)
    if isinstance(obj, PairwiseMatrix):
        ids = obj.policy_ids
        rows = [(ids[k], ids[l], repr(float(obj.probabilities[k, l]))) for k in range(len(ids)) for l in range(len(ids))]
        return _csv_text(["policy_k", "policy_l", "probability"], rows)
    _payload(obj)  # type check
    samples = [obj] if isinstance(obj, PosteriorSamples) else list(obj)
    rows = [(s.policy_id, i, repr(float(x))) for s in samples for i, x in enumerate(s.samples)]
    return _csv_text(["policy_id", "index", "theta"], rows)


def pairwise_matrix_csv(matrix: PairwiseMatrix) -> str:
    """Wide row-major layout: header of policy ids, one row per policy."""
    ids = matrix.policy_ids
    rows = [[ids[k]] + [repr(float(x)) for x in matrix.probabilities[k]] for k in range(len(ids))]
    return _csv_text(["policy_id"] + ids, rows)


def chain_trace_csv(samples: Sequence[PosteriorSamples], burnin: int) -> str:
    rows = []
    for s in samples:
        if s.trace is None:
            continue
        for i, (theta, acc) in enumerate(zip(s.trace, s.accepted)):
            rows.append((s.policy_id, i, "burnin" if i < burnin else "sampling", repr(float(theta)), int(acc)))
    return _csv_text(["policy_id", "iteration", "phase", "theta", "accepted"], rows)


def write_report(obj, path, format: str = "json", provenance: dict | None = None) -> Path:
    if format == "json":
        text = report_json(obj, provenance)
    elif format == "csv":
        text = report_csv(obj)
    else:
        raise ValidationError(f"unknown report format {format!r}")
    try:
        return atomic_write_text(path, text)
    except OSError as exc:
        raise PoprError(f"cannot write {path}: {exc.strerror}") from None


def read_report(path):
    """Load a JSON report written by :func:`write_report`."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    schema, version = doc.get("schema"), doc.get("version")
    if not isinstance(version, int) or version > REPORT_VERSION or version < 1:
        raise ValidationError(f"unsupported report version {version!r}")
    if schema == "popr.ranking":
        return RankingReport.from_dict(doc["data"])
    if schema == "popr.pairwise":
        return PairwiseMatrix.from_dict(doc["data"])
    if schema == "popr.samples":
        return [samples_from_dict(d) for d in doc["data"]]
    raise ValidationError(f"unknown report schema {schema!r}")


def read_ordering(path) -> list[str]:
    """An ordering file: a JSON list, a JSON ranking report, or one id per line."""
    text = Path(path).read_text(encoding="utf-8")
    stripped = text.strip()
    if stripped.startswith("[") or stripped.startswith("{"):
        data = json.loads(stripped)
        if isinstance(data, dict):
            data = data.get("data", data)
            data = data.get("ordering") if isinstance(data, dict) else None
        if not isinstance(data, list):
            raise ValidationError(f"{path}: no ordering list found")
        return [str(x) for x in data]
    return [line.strip() for line in text.splitlines() if line.strip() and not line.startswith("#")]
