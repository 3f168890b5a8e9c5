"""JSON serialization for models, policies, and synthesis results.

Model documents::

    {"n": int, "N": int, "m": int or null,
     "actions": [name, ...],
     "modes": [{"A": [[...], ...], "B": [[...], ...] or null}, ...],
     "transitions": {name: [[...], ...], ...},
     "initial_mode": int}          # 0-based

Result documents::

    {"method": "cd" | "sdp" | "cert", "status": str,
     "policy": [[...], ...] or null, "rho": float or null,
     "certificate": {"V": [[[...]]...], "epsilon": float} or null,
     "gamma_trace": [float, ...], "iterations": int,
     "wall_time_s": float, "seed": int or null}

All matrices are nested row-major lists; numbers use Python's
shortest-round-trip decimal formatting, so save/load round-trips are
bit exact.  Transition rows whose sums are within 1e-9 of one are
renormalized on load; anything further off is a format error.
"""

from __future__ import annotations

import json
from typing import Any

import numpy as np

from .errors import ModelFormatError
from .model import (
    ROW_SUM_TOL,
    Dtmc,
    Mdp,
    Policy,
    SwitchedLinearSystem,
    induce_dtmc,
    validate_system,
)
from .stability import LyapunovCertificate, check_mss_spectral, verify_policy_certificate
from .synthesis import SynthesisResult


def _matrix_list(mat: np.ndarray) -> list:
    return np.asarray(mat, dtype=float).tolist()


def model_to_dict(sys: SwitchedLinearSystem, mdp: Mdp) -> dict:
    modes = []
    for i in range(sys.N):
        entry: dict[str, Any] = {"A": _matrix_list(sys.A[i])}
        entry["B"] = _matrix_list(sys.B[i]) if sys.B is not None else None
        modes.append(entry)
    return {
        "n": sys.n,
        "N": sys.N,
        "m": sys.m,
        "actions": list(mdp.actions),
        "modes": modes,
        "transitions": {a: _matrix_list(mdp.T[a]) for a in mdp.actions},
        "initial_mode": mdp.initial_mode,
    }


def _renormalize_rows(t: np.ndarray) -> np.ndarray:
    out = np.array(t, dtype=float)
    for i in range(out.shape[0]):
        s = out[i].sum()
        if s != 0.0 and abs(s - 1.0) <= ROW_SUM_TOL:
            out[i] /= s
    return out


def model_from_dict(doc: dict) -> tuple[SwitchedLinearSystem, Mdp]:
    """Parse and validate a model document.

    Raises :class:`ModelFormatError` carrying every violation found.
    """
    problems: list[str] = []
    for key in ("actions", "modes", "transitions"):
        if key not in doc:
            problems.append(f"missing key {key!r}")
    if problems:
        raise ModelFormatError(problems)
    try:
        A = tuple(np.asarray(mode["A"], dtype=float) for mode in doc["modes"])
        bs = [mode.get("B") for mode in doc["modes"]]
        B = None
        if any(b is not None for b in bs):
            if any(b is None for b in bs):
                raise ModelFormatError(["modes must all or none carry a B matrix"])
            B = tuple(np.asarray(b, dtype=float) for b in bs)
        sys = SwitchedLinearSystem(A=A, B=B)
        transitions = {
            str(a): _renormalize_rows(np.asarray(t, dtype=float))
            for a, t in doc["transitions"].items()
        }
        mdp = Mdp(
            actions=tuple(str(a) for a in doc["actions"]),
            T=transitions,
            initial_mode=int(doc.get("initial_mode", 0)),
        )
    except ModelFormatError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ModelFormatError([f"malformed model document: {exc}"]) from exc
    report = validate_system(sys, mdp)
    if not report.ok:
        raise ModelFormatError(report.violations)
    declared = {"n": sys.n, "N": sys.N}
    for key, actual in declared.items():
        if key in doc and int(doc[key]) != actual:
            raise ModelFormatError([f"declared {key}={doc[key]} but matrices give {actual}"])
    return sys, mdp


def save_model(path, sys: SwitchedLinearSystem, mdp: Mdp) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(sys, mdp), fh, indent=2)
        fh.write("\n")


def load_model(path) -> tuple[SwitchedLinearSystem, Mdp]:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelFormatError([f"invalid JSON: {exc}"]) from exc
    return model_from_dict(doc)


def policy_from_dict(doc) -> Policy:
    """Accept either a bare matrix, ``{"policy": matrix}``, or a full
    result document."""
    if isinstance(doc, dict):
        if doc.get("policy") is None:
            raise ModelFormatError(["document carries no policy"])
        doc = doc["policy"]
    try:
        pi = np.asarray(doc, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ModelFormatError([f"malformed policy: {exc}"]) from exc
    if pi.ndim != 2:
        raise ModelFormatError(["policy must be a 2-D matrix"])
    return Policy(pi)


def load_policy(path) -> Policy:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelFormatError([f"invalid JSON: {exc}"]) from exc
    return policy_from_dict(doc)


def certificate_from_dict(doc: dict) -> LyapunovCertificate | None:
    cert = doc.get("certificate")
    if cert is None:
        return None
    try:
        return LyapunovCertificate(
            V=tuple(np.asarray(v, dtype=float) for v in cert["V"]),
            epsilon=float(cert["epsilon"]),
        )
    except (TypeError, ValueError, KeyError) as exc:
        raise ModelFormatError([f"malformed certificate: {exc}"]) from exc


def result_to_dict(
    method: str,
    result: SynthesisResult,
    rho: float | None = None,
    seed: int | None = None,
) -> dict:
    cert = None
    if result.certificate is not None:
        cert = {
            "V": [_matrix_list(v) for v in result.certificate.V],
            "epsilon": result.certificate.epsilon,
        }
    return {
        "method": method,
        "status": result.status,
        "policy": _matrix_list(result.policy.pi) if result.policy is not None else None,
        "rho": rho,
        "certificate": cert,
        "gamma_trace": list(result.gamma_trace),
        "iterations": result.iterations,
        "wall_time_s": result.wall_time,
        "seed": seed,
    }


def save_result(path, doc: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def reverify_result(sys: SwitchedLinearSystem, mdp: Mdp, doc: dict) -> tuple[bool, float | None]:
    """Standalone re-check of a result document against a model.

    Uses only the document's policy and certificate (no solver): the
    certificate must pass the arithmetic check and the induced chain's
    lifted radius must be below one.  Returns (verified, rho).
    """
    if doc.get("policy") is None:
        return False, None
    policy = policy_from_dict(doc)
    dtmc = induce_dtmc(mdp, policy)
    report = check_mss_spectral(dtmc, sys)
    cert = certificate_from_dict(doc)
    if cert is None:
        return False, report.rho
    ok = verify_policy_certificate(mdp, sys, policy, cert) and bool(report.stable)
    return ok, report.rho
