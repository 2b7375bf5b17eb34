import pytest

from loopcurate.geometry import Circle
from loopcurate.model import AnnotationSet, CircleAnnotation, Provenance
from loopcurate.synthetic import SynthSpec, make_synthetic_slide


def quantized(value, digits=4):
    return round(float(value), digits)


def random_circle(rng, span=4000.0, r_lo=2.0, r_hi=300.0, grid=False):
    cx = rng.uniform(0, span)
    cy = rng.uniform(0, span)
    r = rng.uniform(r_lo, r_hi)
    if grid:
        cx, cy, r = quantized(cx), quantized(cy), max(quantized(r), 0.0001)
    return Circle(cx, cy, r)


def random_annotation(rng, ann_id, grid=False):
    provenance = rng.choice([Provenance.MACHINE, Provenance.HUMAN_ADDED, Provenance.HUMAN_EDITED])
    score = None
    if provenance is Provenance.MACHINE or (provenance is Provenance.HUMAN_EDITED and rng.random() < 0.5):
        score = quantized(rng.random())
    class_label = rng.choice([None, "GDG", "GOG"])
    return CircleAnnotation(
        id=int(ann_id),
        geometry=random_circle(rng, grid=grid),
        provenance=provenance,
        score=score,
        class_label=class_label,
        loop_index=int(rng.integers(0, 4)),
    )


def random_annotation_set(rng, n, slide_id="fixture", grid=False):
    anns = tuple(random_annotation(rng, i + 1, grid=grid) for i in range(n))
    return AnnotationSet(slide_id=slide_id, annotations=anns, active_threshold=quantized(rng.random()))


@pytest.fixture(scope="session")
def small_synth(tmp_path_factory):
    """A compact 3-level slide shared by read-only tests."""
    out = tmp_path_factory.mktemp("slides") / "small"
    spec = SynthSpec(width=1536, height=1024, n_disks=12, radius_range=(24, 56), seed=3, n_levels=3)
    return make_synthetic_slide(spec, out)
