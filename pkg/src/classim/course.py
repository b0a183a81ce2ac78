"""Ordered course content: slides plus the teaching script for each page."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

SLIDE_KINDS = ("markdown", "image")


class CourseError(ValueError):
    """Raised when a course file cannot be parsed or violates an invariant."""


@dataclass(frozen=True)
class Slide:
    """Display content for one page: markdown text or a relative image path."""

    kind: str
    value: str


@dataclass(frozen=True)
class ScriptPage:
    """One page of material: the slide shown and the script the teacher delivers."""

    index: int
    slide: Slide
    script: str


@dataclass(frozen=True)
class Course:
    id: str
    title: str
    pages: tuple[ScriptPage, ...]

    def page(self, index: int) -> ScriptPage:
        """Return the page with the given 1-based index."""
        if not 1 <= index <= len(self.pages):
            raise CourseError(f"page index {index} out of range 1..{len(self.pages)}")
        return self.pages[index - 1]

    def __len__(self) -> int:
        return len(self.pages)


def validate_course(course: Course) -> list[str]:
    """Check every course invariant; return one description per violation.

    Total function: never raises, an empty list means the course is valid.
    """
    violations: list[str] = []
    if not course.pages:
        violations.append("course has no pages")
    seen: set[int] = set()
    for pos, page in enumerate(course.pages, start=1):
        if page.index in seen:
            violations.append(f"page {page.index}: duplicate index")
        seen.add(page.index)
        if page.index != pos:
            violations.append(f"page {pos}: expected index {pos}, found {page.index}")
        if not page.script.strip():
            violations.append(f"page {page.index}: empty script")
        if not page.slide.value.strip():
            violations.append(f"page {page.index}: empty slide")
        if page.slide.kind not in SLIDE_KINDS:
            violations.append(f"page {page.index}: unknown slide kind {page.slide.kind!r}")
    return violations


def course_from_dict(data: dict) -> Course:
    """Build a Course from the JSON document shape, validating invariants."""
    try:
        pages = tuple(
            ScriptPage(
                index=int(p["index"]),
                slide=Slide(kind=p["slide"]["kind"], value=p["slide"]["value"]),
                script=p["script"],
            )
            for p in data["pages"]
        )
        course = Course(id=data["id"], title=data["title"], pages=pages)
    except (KeyError, TypeError) as exc:
        raise CourseError(f"malformed course document: {exc}") from exc
    violations = validate_course(course)
    if violations:
        raise CourseError("; ".join(violations))
    return course


def course_to_dict(course: Course) -> dict:
    return {
        "id": course.id,
        "title": course.title,
        "pages": [
            {
                "index": p.index,
                "slide": {"kind": p.slide.kind, "value": p.slide.value},
                "script": p.script,
            }
            for p in course.pages
        ],
    }


def load_course(path: str | Path) -> Course:
    """Load and validate a course JSON file."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CourseError(f"cannot read course file {path}: {exc}") from exc
    return course_from_dict(data)


def write_course(course: Course, path: str | Path) -> None:
    """Serialize a course to JSON; inverse of load_course."""
    Path(path).write_text(
        json.dumps(course_to_dict(course), ensure_ascii=False, indent=2),
        encoding="utf-8",
    )
