"""Collects one PASS/FAIL line per acceptance criterion for the terminal summary."""

from contextlib import contextmanager

LINES: list[str] = []


@contextmanager
def criterion(number: int, title: str):
    """Record PASS when the block finishes, FAIL (with the error) when it raises.

    The block may store a measurement summary in ``info["detail"]``.
    """
    info: dict = {}
    try:
        yield info
    except BaseException as err:
        detail = info.get("detail") or f"{type(err).__name__}: {err}".splitlines()[0]
        _emit(number, title, False, detail)
        raise
    _emit(number, title, True, info.get("detail", ""))


def _emit(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {title}" + (f"  [{detail}]" if detail else "")
    LINES.append(line)
    print(line)
