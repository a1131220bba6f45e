"""Exception taxonomy shared across the package.

The CLI maps these onto process exit codes: validation failures exit 2,
resource/feasibility failures exit 3.
"""

from __future__ import annotations


class ValidationError(ValueError):
    """Input violates a documented precondition or type invariant."""


class ResourceError(RuntimeError):
    """Requested computation exceeds a guarded budget (states, tuples,
    acceptance rate, consecutive rejections)."""


class NearBoundaryError(ValidationError):
    """State too close to the chamber boundary for a guarded evaluation."""
