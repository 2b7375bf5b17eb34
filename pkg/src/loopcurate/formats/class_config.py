"""The class configuration file clinicians edit by hand.

Line-oriented UTF-8 text, LF endings, '#' comment lines ignored:

    version<TAB>1
    g<TAB>GDG<TAB>Global Disappearing Glomerulosclerosis
    o<TAB>GOG<TAB>Global Obsolescent Glomerulosclerosis

Each class line is key<TAB>code<TAB>name where key is a single keyboard
character (the classification hotkey). The version directive is optional and
cannot collide with a class line because keys are single characters.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import ValidationError


@dataclass(frozen=True)
class ClassDef:
    key: str
    code: str
    name: str

    def __post_init__(self):
        if len(self.key) != 1:
            raise ValidationError(f"class key must be a single character, got {self.key!r}")
        if not self.code:
            raise ValidationError("class code must be non-empty")
        if not self.name:
            raise ValidationError(f"class {self.code!r} has an empty name")


@dataclass(frozen=True)
class ClassConfig:
    classes: tuple[ClassDef, ...]
    version: str = "1"

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(self.classes))
        if not self.classes:
            raise ValidationError("no classes defined")
        keys = [c.key for c in self.classes]
        codes = [c.code for c in self.classes]
        if len(set(keys)) != len(keys):
            dupes = sorted({k for k in keys if keys.count(k) > 1})
            raise ValidationError(f"duplicate class keys: {dupes}")
        if len(set(codes)) != len(codes):
            dupes = sorted({c for c in codes if codes.count(c) > 1})
            raise ValidationError(f"duplicate class codes: {dupes}")

    @property
    def codes(self) -> tuple[str, ...]:
        return tuple(c.code for c in self.classes)

    def by_key(self, key: str) -> ClassDef:
        for c in self.classes:
            if c.key == key:
                return c
        raise ValidationError(f"no class bound to key {key!r}")

    def has_code(self, code: str) -> bool:
        return code in self.codes


def load_class_config(data: bytes) -> ClassConfig:
    text = data.decode("utf-8")
    version = "1"
    classes: list[ClassDef] = []
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.rstrip("\r")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = line.split("\t")
        if fields[0] == "version":
            if len(fields) != 2:
                raise ValidationError(f"line {lineno}: version directive needs exactly one value", location=f"line {lineno}")
            version = fields[1]
            continue
        if len(fields) != 3:
            raise ValidationError(
                f"line {lineno}: expected key<TAB>code<TAB>name, got {len(fields)} field(s)", location=f"line {lineno}"
            )
        try:
            classes.append(ClassDef(key=fields[0], code=fields[1], name=fields[2]))
        except ValidationError as exc:
            raise ValidationError(f"line {lineno}: {exc}", location=f"line {lineno}") from exc
    if not classes:
        raise ValidationError("no classes defined")
    return ClassConfig(classes=tuple(classes), version=version)


def save_class_config(config: ClassConfig) -> bytes:
    lines = [f"version\t{config.version}"]
    lines.extend(f"{c.key}\t{c.code}\t{c.name}" for c in config.classes)
    return ("\n".join(lines) + "\n").encode("utf-8")
