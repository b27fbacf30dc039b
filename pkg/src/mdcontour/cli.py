"""Batch front-end: CSV in, one rendered PNG per selected dimension out."""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import dataset, field, layout, mesh, projection, render

MAX_RESOLUTION = 8192


class PipelineError(Exception):
    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {cause}")


def auto_spacing(values) -> float:
    """Contour interval from the 1/2/5 ladder giving 8-15 levels over the
    value range; nearest ladder step if no rung lands inside the band."""
    values = np.asarray(values, dtype=float)
    lo, hi = float(values.min()), float(values.max())
    rng = hi - lo
    if rng <= 0:
        return 1.0
    k = int(np.ceil(np.log10(rng)))
    ladder = [m * 10.0**e for e in range(k, k - 6, -1) for m in (5.0, 2.0, 1.0)]
    best, best_dist = ladder[0], np.inf
    for s in ladder:
        count = int(rng / s)
        if 8 <= count <= 15:
            return s
        dist = (8 - count) if count < 8 else (count - 15)
        if dist < best_dist:
            best, best_dist = s, dist
    return best


@dataclass
class PipelineConfig:
    input: str
    dims: list[str] = dc_field(default_factory=lambda: ["all"])
    variant: str = "affine"
    alpha: float | None = None
    relax: float = 1.0
    mode: str = "contour"
    spacing: float | str = "auto"
    width: int = 600
    height: int = 600
    iterations: int = 500
    decay_lambda: float | None = None
    initial_temp: float | None = None
    edge_length: float | None = None
    seed: int = 0
    output: str = "mdcontour-{dim}.png"
    legend: bool = False
    threads: int = 1
    point_radius: float = 2.5

    def validate(self):
        if not 0.0 <= self.relax <= 1.0:
            raise ValueError(f"relax must be in [0, 1], got {self.relax}")
        if not (0 < self.width <= MAX_RESOLUTION and 0 < self.height <= MAX_RESOLUTION):
            raise ValueError(f"resolution limited to {MAX_RESOLUTION}^2")
        if self.variant not in field.VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.mode not in render.MODES:
            raise ValueError(f"unknown mode {self.mode!r}")


def _expand_dims(tokens: list[str], ds: dataset.Dataset) -> list[tuple[str, ...]]:
    """Dimension selectors: 'all', column names, 'a+b' pairs, 'projection'."""
    out: list[tuple[str, ...]] = []
    for tok in tokens:
        if tok == "all":
            out.extend((n,) for n in ds.names)
        elif tok == "projection":
            out.append(("projection",))
        elif "+" in tok:
            a, b = tok.split("+", 1)
            out.append((a.strip(), b.strip()))
        else:
            out.append((tok.strip(),))
    for sel in out:
        for name in sel:
            if name != "projection" and name not in ds.names:
                raise KeyError(f"unknown dimension {name!r}; available: {', '.join(ds.names)}")
    return out


def _stage(name):
    class _Ctx:
        def __enter__(self):
            return self

        def __exit__(self, exc_type, exc, tb):
            if exc is not None and not isinstance(exc, PipelineError):
                raise PipelineError(name, exc) from exc
            return False

    return _Ctx()


def prepare_session(cfg: PipelineConfig):
    """Shared front half of the pipeline: load, project, mesh, relax."""
    cfg.validate()
    from . import _kernels

    _kernels.set_threads(cfg.threads)
    with _stage("dataset"):
        ds = dataset.normalize(dataset.load_csv(cfg.input, skip_non_numeric=True))
    with _stage("projection"):
        model, cloud = projection.pca_project(ds)
    with _stage("mesh"):
        tri = mesh.delaunay(cloud, seed=cfg.seed)
    with _stage("layout"):
        overrides = {}
        if cfg.decay_lambda is not None:
            overrides["decay_lambda"] = cfg.decay_lambda
        if cfg.initial_temp is not None:
            overrides["initial_temp"] = cfg.initial_temp
        if cfg.edge_length is not None:
            overrides["desired_edge_d"] = cfg.edge_length
        params = layout.LayoutParams.defaults_for(tri, iterations=cfg.iterations, **overrides)
        state = layout.layout_run(tri, params)
    return ds, model, tri, params, state


def _targets_for(sel: tuple[str, ...], ds: dataset.Dataset, tri: mesh.TriMesh):
    if sel == ("projection",):
        return field.projection_targets(tri)
    if len(sel) == 1:
        return field.dimension_targets(ds, sel[0])
    return field.dimension_targets(ds, sel[0], sel[1])


def render_one(
    cfg: PipelineConfig,
    ds: dataset.Dataset,
    tri: mesh.TriMesh,
    positions: np.ndarray,
    sel: tuple[str, ...],
) -> render.RenderedImage:
    targets = _targets_for(sel, ds, tri)
    with _stage("field"):
        params = field.MlsParams(variant=cfg.variant, alpha=cfg.alpha)
        fld = field.compute_field(
            tri, positions, targets, params, cfg.width, cfg.height, threads=cfg.threads
        )
    with _stage("render"):
        spacing = (
            auto_spacing(targets.targets[:, 0]) if cfg.spacing == "auto" else float(cfg.spacing)
        )
        spec = render.RenderSpec(mode=cfg.mode, spacing=spacing, point_radius=cfg.point_radius)
        img = render.render(fld, spec)
        img = render.overlay_points(img, positions, fld.transform, spec)
        if cfg.legend:
            img = render.attach_legend(img, render.render_legend(fld, spec))
    return img


def run_pipeline(cfg: PipelineConfig) -> list[str]:
    ds, model, tri, params, state = prepare_session(cfg)
    with _stage("layout"):
        positions = layout.interpolate_layout(state, cfg.relax)
        flips = layout.count_orientation_flips(tri, positions)
        if flips:
            print(
                f"warning: {flips} triangle(s) flipped at relax={cfg.relax}; "
                "endpoints are planar but blends are not guaranteed to be",
                file=sys.stderr,
            )
    selections = _expand_dims(cfg.dims, ds)
    if len(selections) > 1 and "{dim}" not in cfg.output:
        raise ValueError("output template needs a {dim} placeholder for multiple dimensions")

    written = []
    for sel in selections:
        img = render_one(cfg, ds, tri, positions, sel)
        path = cfg.output.replace("{dim}", "-".join(sel))
        with _stage("output"):
            img.save(path)
        written.append(path)
    return written


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="mdcontour",
        description="Render multidimensional tabular data as fixed-point contour plots.",
    )
    p.add_argument("--input", required=True, help="input CSV file (header row required)")
    p.add_argument(
        "--dims",
        default="all",
        help="comma-separated column names, 'a+b' pairs, 'projection', or 'all' "
        "(one output image per entry)",
    )
    p.add_argument("--variant", default="affine", choices=list(field.VARIANTS),
                   help="interpolation variant")
    p.add_argument("--alpha", type=float, default=None,
                   help="MLS distance-weight exponent (default per variant)")
    p.add_argument("--relax", type=float, default=1.0,
                   help="blend between original (0) and relaxed (1) layout")
    p.add_argument("--mode", default="contour", choices=list(render.MODES),
                   help="rendering mode")
    p.add_argument("--spacing", default="auto",
                   help="contour interval in target units, or 'auto'")
    p.add_argument("--resolution", default="600x600", metavar="WxH",
                   help="output raster size")
    p.add_argument("--iterations", type=int, default=500, help="layout iterations")
    p.add_argument("--lambda", dest="decay_lambda", type=float, default=None,
                   help="annealing decay constant in (0,1)")
    p.add_argument("--temp", dest="initial_temp", type=float, default=None,
                   help="initial annealing temperature")
    p.add_argument("--edge-length", dest="edge_length", type=float, default=None,
                   help="desired edge length (default: median initial edge)")
    p.add_argument("--seed", type=int, default=0,
                   help="seed for de-duplication jitter and tie-breaking")
    p.add_argument("--output", default="mdcontour-{dim}.png",
                   help="output path template; {dim} expands per dimension")
    p.add_argument("--legend", action="store_true", help="attach a value/color legend strip")
    p.add_argument("--serve", type=int, nargs="?", const=8000, default=None, metavar="PORT",
                   help="start the interactive HTTP service instead of writing files")
    return p


def config_from_args(args) -> PipelineConfig:
    try:
        w, h = (int(v) for v in args.resolution.lower().split("x"))
    except ValueError:
        raise ValueError(f"bad --resolution {args.resolution!r}, expected WxH") from None
    spacing = args.spacing if args.spacing == "auto" else float(args.spacing)
    threads = max(1, int(os.environ.get("MDCONTOUR_THREADS", "1")))
    return PipelineConfig(
        input=args.input,
        dims=[t.strip() for t in args.dims.split(",") if t.strip()],
        variant=args.variant,
        alpha=args.alpha,
        relax=args.relax,
        mode=args.mode,
        spacing=spacing,
        width=w,
        height=h,
        iterations=args.iterations,
        decay_lambda=args.decay_lambda,
        initial_temp=args.initial_temp,
        edge_length=args.edge_length,
        seed=args.seed,
        output=args.output,
        legend=args.legend,
        threads=threads,
    )


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
        cfg.validate()
    except (ValueError, KeyError) as exc:
        parser.error(str(exc))  # exits with code 2

    if args.serve is not None:
        from . import service

        try:
            service.serve(cfg, port=args.serve)
        except PipelineError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        return 0

    try:
        written = run_pipeline(cfg)
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except KeyError as exc:
        parser.error(str(exc.args[0]) if exc.args else str(exc))
    except ValueError as exc:
        parser.error(str(exc))
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
