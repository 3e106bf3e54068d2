"""Command-line entry point: simulate, analyze, tune, compare, plot.

Configuration is layered: packaged defaults, then an optional user config
file (flat key = value sections), then individual command-line flags.
Unknown sections or keys are rejected. Exit codes: 0 success, 2 invalid
configuration, 3 simulation fault (partial log retained), 4 certification
failure.
"""

import argparse
import configparser
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import plots
from .errors import (
    DcUncertaintyError,
    SimulationDivergedError,
    TuningInfeasibleError,
)
from .imc_force import ImcFilterConfig, NominalActuatorModel
from .rigid_body import planar_quadruped
from .robustness import (
    PerformanceWeight,
    UncertaintySpec,
    export_csv,
    margin_curve,
    robust_performance_margin,
    tune_eta_f,
    uncertainty_bound,
)
from .simulator import ActuatorParams, ControllerConfig, GroundModel, make_scenario, run_scenario

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_CERTIFICATION = 4

_SCHEMA = {
    "robot": {
        "type", "trunk_mass", "trunk_inertia", "leg_upper_mass", "leg_lower_mass",
        "leg_upper_inertia", "leg_lower_inertia", "leg_upper_length",
        "leg_lower_length", "hip_x",
    },
    "ground": {"stiffness", "damping", "friction"},
    "actuators": {"gain", "time_constant", "deadtime", "stiction"},
    "imc": {"eta_f_dist", "eta_f_track", "fast_pole_ratio", "deadzone_width"},
    "controller": {
        "kind", "com_kp", "com_kd", "swing_kp", "swing_kd", "baseline_kp", "baseline_kd",
    },
    "uncertainty": {
        "gain_nominal", "gain_delta", "tc_nominal", "tc_delta", "deadtime",
        "weight_bandwidth", "eta_f_list", "eta_f_search",
    },
    "scenario": {
        "name", "duration", "dt", "seed", "noise_std", "push_force",
        "step_length", "n_cycles",
    },
    "run": {"out_dir", "plots"},
}

_RANGES = {
    ("ground", "stiffness"): (1e2, 1e8),
    ("ground", "friction"): (0.0, 5.0),
    ("actuators", "gain"): (0.05, 20.0),
    ("actuators", "time_constant"): (1e-4, 1.0),
    ("actuators", "deadtime"): (0.0, 0.1),
    ("imc", "eta_f_dist"): (1e-4, 10.0),
    ("imc", "eta_f_track"): (1e-4, 10.0),
    ("scenario", "duration"): (0.01, 600.0),
    ("scenario", "dt"): (1e-5, 0.05),
}


class ConfigError(ValueError):
    pass


class RunConfig:
    """Validated, merged configuration for one command invocation."""

    def __init__(self, parser):
        self.raw = parser

    @classmethod
    def load(cls, config_path=None, model_path=None, overrides=None):
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        with resources.files("wbfc.configs").joinpath("default.ini").open() as fh:
            parser.read_file(fh)
        for path in (config_path, model_path):
            if path is None:
                continue
            if not Path(path).is_file():
                raise ConfigError(f"config file not found: {path}")
            read = parser.read(path)
            if not read:
                raise ConfigError(f"could not parse config file: {path}")
        if overrides:
            for (section, key), value in overrides.items():
                if value is None:
                    continue
                parser.set(section, key, str(value))
        cfg = cls(parser)
        cfg.validate()
        return cfg

    def validate(self):
        for section in self.raw.sections():
            if section not in _SCHEMA:
                raise ConfigError(f"unknown config section [{section}]")
            for key in self.raw[section]:
                if key not in _SCHEMA[section]:
                    raise ConfigError(f"unknown key {key!r} in section [{section}]")
        for (section, key), (lo, hi) in _RANGES.items():
            val = self.getfloat(section, key)
            if not (lo <= val <= hi):
                raise ConfigError(
                    f"{section}.{key} = {val} outside the valid range [{lo}, {hi}]"
                )
        if self.get("controller", "kind") not in ("imc", "baseline"):
            raise ConfigError("controller.kind must be imc or baseline")

    def get(self, section, key):
        return self.raw.get(section, key)

    def getfloat(self, section, key):
        try:
            return self.raw.getfloat(section, key)
        except ValueError as e:
            raise ConfigError(f"{section}.{key} is not a number") from e

    def getint(self, section, key):
        try:
            return self.raw.getint(section, key)
        except ValueError as e:
            raise ConfigError(f"{section}.{key} is not an integer") from e

    def getfloats(self, section, key):
        text = self.get(section, key)
        try:
            return [float(v) for v in text.replace(",", " ").split()]
        except ValueError as e:
            raise ConfigError(f"{section}.{key} is not a list of numbers") from e

    def write(self, path):
        with open(path, "w") as fh:
            self.raw.write(fh)

    # ---- object builders -------------------------------------------------

    def build_model(self):
        if self.get("robot", "type") != "planar_quadruped":
            raise ConfigError("robot.type must be planar_quadruped")
        hip_x = self.getfloats("robot", "hip_x")
        if len(hip_x) != 4:
            raise ConfigError("robot.hip_x must list four offsets")
        return planar_quadruped(
            trunk_mass=self.getfloat("robot", "trunk_mass"),
            trunk_inertia=self.getfloat("robot", "trunk_inertia"),
            leg_upper_mass=self.getfloat("robot", "leg_upper_mass"),
            leg_lower_mass=self.getfloat("robot", "leg_lower_mass"),
            leg_upper_inertia=self.getfloat("robot", "leg_upper_inertia"),
            leg_lower_inertia=self.getfloat("robot", "leg_lower_inertia"),
            leg_upper_length=self.getfloat("robot", "leg_upper_length"),
            leg_lower_length=self.getfloat("robot", "leg_lower_length"),
            hip_x=tuple(hip_x),
        )

    def build_ground(self):
        damping = self.get("ground", "damping")
        d_g = None if damping.strip() == "auto" else float(damping)
        return GroundModel(
            k_g=self.getfloat("ground", "stiffness"),
            d_g=d_g,
            mu=self.getfloat("ground", "friction"),
        )

    def build_controller(self, kind=None):
        return ControllerConfig(
            kind=kind or self.get("controller", "kind"),
            com_kp=self.getfloat("controller", "com_kp"),
            com_kd=self.getfloat("controller", "com_kd"),
            swing_kp=self.getfloat("controller", "swing_kp"),
            swing_kd=self.getfloat("controller", "swing_kd"),
            mu=self.getfloat("ground", "friction"),
            filters=ImcFilterConfig(
                eta_f_dist=self.getfloat("imc", "eta_f_dist"),
                eta_f_track=self.getfloat("imc", "eta_f_track"),
                fast_pole_ratio=self.getfloat("imc", "fast_pole_ratio"),
            ),
            nominal=NominalActuatorModel(
                k=self.getfloat("actuators", "gain"),
                eta=self.getfloat("actuators", "time_constant"),
                eta_d=self.getfloat("actuators", "deadtime"),
            ),
            deadzone_width=self.getfloat("imc", "deadzone_width"),
            baseline_kp=self.getfloat("controller", "baseline_kp"),
            baseline_kd=self.getfloat("controller", "baseline_kd"),
        )

    def build_actuators(self):
        return ActuatorParams(
            k=self.getfloat("actuators", "gain"),
            eta=self.getfloat("actuators", "time_constant"),
            eta_d=self.getfloat("actuators", "deadtime"),
            stiction=self.getfloat("actuators", "stiction"),
        )

    def build_scenario(self, model, ground=None):
        name = self.get("scenario", "name")
        kwargs = dict(duration=self.getfloat("scenario", "duration"))
        if name == "stand_push":
            kwargs["push_force"] = self.getfloat("scenario", "push_force")
        if name == "crawl":
            kwargs.pop("duration")
            kwargs["step_length"] = self.getfloat("scenario", "step_length")
            kwargs["n_cycles"] = self.getint("scenario", "n_cycles")
        scenario = make_scenario(name, model, ground=ground or self.build_ground(), **kwargs)
        scenario.dt = self.getfloat("scenario", "dt")
        scenario.noise_std = self.getfloat("scenario", "noise_std")
        return scenario

    def build_uncertainty(self):
        return UncertaintySpec(
            k_nom=self.getfloat("uncertainty", "gain_nominal"),
            dk=self.getfloat("uncertainty", "gain_delta"),
            eta_nom=self.getfloat("uncertainty", "tc_nominal"),
            deta=self.getfloat("uncertainty", "tc_delta"),
            eta_d=self.getfloat("uncertainty", "deadtime"),
        )

    @property
    def seed(self):
        return self.getint("scenario", "seed")

    @property
    def plots_enabled(self):
        return self.raw.getboolean("run", "plots")


def _write_summary(path, entries):
    with open(path, "w") as fh:
        for key, val in entries.items():
            fh.write(f"{key}: {val}\n")


def _summary_lines(summary):
    out = {}
    for key, val in summary.items():
        out[key] = f"{val:.6g}" if isinstance(val, float) else val
    return out


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(cfg, out_dir):
    model = cfg.build_model()
    scenario = cfg.build_scenario(model)
    controller = cfg.build_controller()
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{scenario.name}_{controller.kind}.csv"
    try:
        log = run_scenario(scenario, controller, model, actuators=cfg.build_actuators(), seed=cfg.seed)
    except SimulationDivergedError as e:
        if getattr(e, "log", None) is not None and e.log.n:
            e.log.to_csv(csv_path)
        print(f"simulation fault: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    log.to_csv(csv_path)
    summary = log.summary()
    summary_path = out_dir / f"{scenario.name}_{controller.kind}_summary.txt"
    _write_summary(
        summary_path,
        {"scenario": scenario.name, "controller": controller.kind, "seed": cfg.seed,
         **_summary_lines(summary)},
    )
    cfg.write(out_dir / "effective_config.ini")
    if cfg.plots_enabled:
        plots.simulation_figure(
            log, out_dir / f"{scenario.name}_{controller.kind}.png",
            title=f"{scenario.name} / {controller.kind}",
        )
    for key, val in _summary_lines(summary).items():
        print(f"{key}: {val}")
    return EXIT_OK


def cmd_analyze(cfg, out_dir, eta_f_values=None):
    try:
        spec = cfg.build_uncertainty()
        lbar = uncertainty_bound(spec)
    except DcUncertaintyError as e:
        print(f"certification impossible: {e}", file=sys.stderr)
        return EXIT_CERTIFICATION
    weight = PerformanceWeight(bandwidth=cfg.getfloat("uncertainty", "weight_bandwidth"))
    ratio = cfg.getfloat("imc", "fast_pole_ratio")
    etas = eta_f_values or cfg.getfloats("uncertainty", "eta_f_list")
    out_dir.mkdir(parents=True, exist_ok=True)

    curves = {}
    for ef in etas:
        curves[f"{ef:g}"] = margin_curve(lbar, ef, weight, spec.eta_d, spec.omega, ratio)
        margin, w_at = robust_performance_margin(lbar, ef, weight, spec.eta_d, spec.omega, ratio)
        verdict = "certified" if margin < 1.0 else "uncertified"
        print(f"eta_f = {ef:g}: margin = {margin:.4f} (peak at {w_at:.1f} rad/s) -> {verdict}")
    export_csv(out_dir / "certification.csv", spec.omega, lbar, curves)
    if cfg.plots_enabled:
        plots.certification_figure(spec.omega, lbar, curves, out_dir / "certification.png")
    return EXIT_OK


def cmd_tune(cfg, out_dir):
    try:
        spec = cfg.build_uncertainty()
        lbar = uncertainty_bound(spec)
    except DcUncertaintyError as e:
        print(f"certification impossible: {e}", file=sys.stderr)
        return EXIT_CERTIFICATION
    weight = PerformanceWeight(bandwidth=cfg.getfloat("uncertainty", "weight_bandwidth"))
    ratio = cfg.getfloat("imc", "fast_pole_ratio")
    lo, hi = cfg.getfloats("uncertainty", "eta_f_search")
    try:
        eta_star = tune_eta_f(lbar, weight, spec.eta_d, (lo, hi), spec.omega, ratio)
    except TuningInfeasibleError as e:
        print(f"tuning infeasible: {e}", file=sys.stderr)
        return EXIT_CERTIFICATION
    out_dir.mkdir(parents=True, exist_ok=True)
    fragment = configparser.ConfigParser()
    fragment["imc"] = {"eta_f_dist": f"{eta_star:.6g}"}
    with open(out_dir / "tuned_imc.ini", "w") as fh:
        fragment.write(fh)
    print(f"smallest certified filter time constant: {eta_star:.6g} s")
    if cfg.plots_enabled:
        etas = np.logspace(np.log10(lo), np.log10(hi), 25)
        margins = [
            robust_performance_margin(lbar, e, weight, spec.eta_d, spec.omega, ratio)[0]
            for e in etas
        ]
        plots.tuning_figure(etas, margins, eta_star, out_dir / "tuning.png")
    return EXIT_OK


def cmd_compare(cfg, out_dir):
    model = cfg.build_model()
    out_dir.mkdir(parents=True, exist_ok=True)
    grounds = {
        "stiff": GroundModel(k_g=6.0e5, mu=cfg.getfloat("ground", "friction")),
        "soft": GroundModel(k_g=1.0e4, mu=cfg.getfloat("ground", "friction")),
    }
    rows = []
    entries = {}
    for gname, ground in grounds.items():
        for kind in ("imc", "baseline"):
            scenario = cfg.build_scenario(model, ground=ground)
            controller = cfg.build_controller(kind=kind)
            try:
                log = run_scenario(
                    scenario, controller, model, actuators=cfg.build_actuators(), seed=cfg.seed
                )
            except SimulationDivergedError as e:
                print(f"simulation fault ({gname}/{kind}): {e}", file=sys.stderr)
                return EXIT_RUNTIME
            s = log.summary()
            rms_pos = float(np.hypot(s["rms_com_x"], s["rms_com_z"]))
            rows.append((gname, kind, rms_pos, s))
            entries[f"{gname}/{kind}"] = log
            log.to_csv(out_dir / f"compare_{gname}_{kind}.csv")

    with open(out_dir / "comparison.csv", "w") as fh:
        fh.write("ground,controller,rms_com_pos,rms_com_x,rms_com_z,rms_com_pitch,max_abs_pitch_deg\n")
        for gname, kind, rms_pos, s in rows:
            fh.write(
                f"{gname},{kind},{rms_pos:.8g},{s['rms_com_x']:.8g},{s['rms_com_z']:.8g},"
                f"{s['rms_com_pitch']:.8g},{s['max_abs_pitch_deg']:.8g}\n"
            )

    by = {(g, k): rms for g, k, rms, _ in rows}
    lines = {
        "scenario": cfg.get("scenario", "name"),
        "seed": cfg.seed,
        "stiff_imc_rms_pos": f"{by[('stiff', 'imc')]:.6g}",
        "stiff_baseline_rms_pos": f"{by[('stiff', 'baseline')]:.6g}",
        "soft_imc_rms_pos": f"{by[('soft', 'imc')]:.6g}",
        "soft_baseline_rms_pos": f"{by[('soft', 'baseline')]:.6g}",
        "stiff_ratio_imc_over_baseline": f"{by[('stiff', 'imc')] / by[('stiff', 'baseline')]:.4f}",
        "soft_ratio_imc_over_baseline": f"{by[('soft', 'imc')] / by[('soft', 'baseline')]:.4f}",
    }
    _write_summary(out_dir / "comparison_summary.txt", lines)
    for key, val in lines.items():
        print(f"{key}: {val}")
    if cfg.plots_enabled:
        plots.comparison_figure(entries, out_dir / "comparison.png")
    return EXIT_OK


def cmd_plot(csv_path, out_path):
    if not Path(csv_path).is_file():
        print(f"csv file not found: {csv_path}", file=sys.stderr)
        return EXIT_CONFIG
    plots.csv_figure(csv_path, out_path)
    print(f"wrote {out_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument wiring


def _add_common(p):
    p.add_argument("--config", help="user config file overriding the defaults")
    p.add_argument("--model", help="robot model config file ([robot] section)")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--no-plots", action="store_true", help="skip figure rendering")


def _overrides(args, extra=None):
    ov = {
        ("scenario", "seed"): getattr(args, "seed", None),
        ("run", "plots"): "false" if getattr(args, "no_plots", False) else None,
        ("run", "out_dir"): getattr(args, "out", None),
    }
    if extra:
        ov.update(extra)
    return ov


def build_parser():
    parser = argparse.ArgumentParser(
        prog="wbfc",
        description="Whole-body contact-force control stack: simulation, "
        "certification, tuning and controller comparison.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one scenario and export CSV, summary and figures")
    _add_common(p)
    p.add_argument("--scenario", help="stand | stand_push | plank | seesaw | crawl")
    p.add_argument("--controller", choices=("imc", "baseline"))
    p.add_argument("--ground-k", type=float, help="ground stiffness [N/m]")
    p.add_argument("--ground-d", type=float, help="ground damping [Ns/m]")
    p.add_argument("--mu", type=float, help="friction coefficient")
    p.add_argument("--duration", type=float)
    p.add_argument("--noise-std", type=float)
    p.add_argument("--push-force", type=float)

    p = sub.add_parser("analyze", help="uncertainty bound and certification margins")
    _add_common(p)
    p.add_argument("--eta-f", type=float, action="append", help="filter setting (repeatable)")

    p = sub.add_parser("tune", help="smallest certified filter time constant")
    _add_common(p)
    p.add_argument("--eta-f-lo", type=float)
    p.add_argument("--eta-f-hi", type=float)

    p = sub.add_parser("compare", help="paired controller comparison on soft and stiff ground")
    _add_common(p)
    p.add_argument("--scenario", help="scenario used for both controllers")
    p.add_argument("--duration", type=float)
    p.add_argument("--push-force", type=float)

    p = sub.add_parser("plot", help="render figures from an exported run CSV")
    p.add_argument("--csv", required=True)
    p.add_argument("--out", default="run.png")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)

    if args.command == "plot":
        return cmd_plot(args.csv, args.out)

    extra = {}
    if args.command in ("simulate", "compare"):
        extra[("scenario", "name")] = getattr(args, "scenario", None)
        extra[("scenario", "duration")] = getattr(args, "duration", None)
        extra[("scenario", "push_force")] = getattr(args, "push_force", None)
    if args.command == "simulate":
        extra[("controller", "kind")] = args.controller
        extra[("ground", "stiffness")] = args.ground_k
        extra[("ground", "damping")] = args.ground_d
        extra[("ground", "friction")] = args.mu
        extra[("scenario", "noise_std")] = args.noise_std
    if args.command == "tune" and args.eta_f_lo is not None and args.eta_f_hi is not None:
        extra[("uncertainty", "eta_f_search")] = f"{args.eta_f_lo}, {args.eta_f_hi}"

    try:
        cfg = RunConfig.load(
            config_path=args.config, model_path=args.model, overrides=_overrides(args, extra)
        )
        out_dir = Path(cfg.get("run", "out_dir"))
        if args.command == "simulate":
            return cmd_simulate(cfg, out_dir)
        if args.command == "analyze":
            return cmd_analyze(cfg, out_dir, eta_f_values=args.eta_f)
        if args.command == "tune":
            return cmd_tune(cfg, out_dir)
        if args.command == "compare":
            return cmd_compare(cfg, out_dir)
    except (ConfigError, ValueError) as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
