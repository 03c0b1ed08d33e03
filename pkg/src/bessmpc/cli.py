"""Command-line front end: presets, config files, CSV traces, metrics.

Configs are flat ``key = value`` text files with explicitly-united key
names (``theta_minutes``, ``capacity_mwh``, ...) so every number can be
audited at a glance; ``#`` starts a comment.  Output is data for external
plotting, never plots: a trace CSV per run plus a key=value metrics file.
"""

import argparse
import dataclasses
import logging
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .horizon import ControllerConfig
from .scenarios import (
    GaussianPeakSpec,
    Profile,
    ProfileError,
    gaussian_peak_profile,
    load_csv_profile,
    res_peak_profile,
)
from .sim import (
    InfeasibleStepError,
    SimulationResult,
    SocBoundViolation,
    compute_metrics,
    run_closed_loop,
)

logger = logging.getLogger(__name__)

TRACE_HEADER = "slot,time_h,p_load_mw,p_res_mw,p_gen_mw,p_sto_mw,soc_mwh,solve_ms"

EXIT_OK = 0
EXIT_DOMAIN_ERROR = 1
EXIT_USAGE = 2


class ConfigError(Exception):
    """Invalid or inconsistent run configuration."""


@dataclass
class ScenarioSpec:
    """What to simulate: synthetic gaussian peaks or CSV profiles."""

    kind: str                      # gaussian_demand | gaussian_res | csv
    demand_base_mw: float = 50.0
    res_base_mw: float = 0.0
    peak_amplitude_fraction: float = 0.5
    peak_center_hour: float = 17.0
    peak_sigma_slots: float = 4.0
    start_hour: float = 0.0
    load_csv: str | None = None
    res_csv: str | None = None
    csv_time_column: str = "timestamp"
    csv_value_column: str = "power_mw"

    def materialize(self, slot_hours: float, duration_slots: int,
                    pad_slots: int) -> tuple[Profile, Profile]:
        """Build the (load, res) profiles backing one run.

        Synthetic scenarios generate ``pad_slots`` extra slots past the
        simulated span so late windows still see a full horizon of
        forecast; CSV data is taken as-is (windows shrink if it ends).
        """
        n = duration_slots + pad_slots
        if self.kind == "gaussian_demand":
            spec = GaussianPeakSpec(self.demand_base_mw, self.peak_amplitude_fraction,
                                    self.peak_center_hour, self.peak_sigma_slots)
            load = gaussian_peak_profile(spec, self.start_hour, n, slot_hours)
            res = Profile(self.start_hour, slot_hours, np.full(n, self.res_base_mw))
        elif self.kind == "gaussian_res":
            spec = GaussianPeakSpec(self.res_base_mw, self.peak_amplitude_fraction,
                                    self.peak_center_hour, self.peak_sigma_slots)
            res = res_peak_profile(spec, self.start_hour, n, slot_hours)
            load = Profile(self.start_hour, slot_hours, np.full(n, self.demand_base_mw))
        elif self.kind == "csv":
            if not self.load_csv:
                raise ConfigError("scenario=csv requires load_csv")
            load = load_csv_profile(self.load_csv, self.csv_value_column, slot_hours,
                                    time_column=self.csv_time_column)
            if self.res_csv:
                res = load_csv_profile(self.res_csv, self.csv_value_column, slot_hours,
                                       time_column=self.csv_time_column,
                                       clamp_non_negative=True)
                if res.n_slots != load.n_slots:
                    n_common = min(res.n_slots, load.n_slots)
                    logger.warning("load (%d) and res (%d) profiles differ in length; "
                                   "truncating to %d slots", load.n_slots, res.n_slots, n_common)
                    load = Profile(load.start_hour, slot_hours, load.values[:n_common])
                    res = Profile(res.start_hour, slot_hours, res.values[:n_common])
            else:
                res = Profile(load.start_hour, slot_hours, np.zeros(load.n_slots))
        else:
            raise ConfigError(f"unknown scenario {self.kind!r}")
        return load, res


@dataclass
class RunConfig:
    """Everything one simulation run needs, fully resolved."""

    controller: ControllerConfig
    scenario: ScenarioSpec
    x_init_mwh: float
    duration_slots: int
    trace_path: str
    metrics_path: str
    baseline: bool = False

    def validate(self):
        if not (self.controller.x_min <= self.x_init_mwh <= self.controller.x_max):
            raise ConfigError(
                f"x_init_mwh={self.x_init_mwh} outside SoC bounds "
                f"[{self.controller.x_min}, {self.controller.x_max}] MWh")
        if self.duration_slots < 1:
            raise ConfigError("duration must cover at least one slot")


# Defaults mirror the reference simulation setup: 12 MWh / 6 MW storage,
# 5-minute slots, 2-hour horizon, alpha=1, beta=5, gamma=1, x_ref=6 MWh,
# x_init=0, and an effectively unbounded plant encoded as +-1e6 MW.
_DEFAULTS = {
    "theta_minutes": "5",
    "horizon_slots": "24",
    "alpha": "1",
    "beta": "5",
    "gamma": "1",
    "capacity_mwh": "12",
    "x_ref_mwh": "6",
    "storage_power_mw": "6",
    "pg_min_mw": "-1e6",
    "pg_max_mw": "1e6",
    "scenario": "gaussian_demand",
    "demand_base_mw": "50",
    "res_base_mw": "0",
    "peak_amplitude_fraction": "0.5",
    "peak_center_hour": "17",
    "peak_sigma_slots": "4",
    "start_hour": "0",
    "duration_hours": "24",
    "load_csv": "",
    "res_csv": "",
    "csv_time_column": "timestamp",
    "csv_value_column": "power_mw",
    "x_init_mwh": "0",
    "duration_slots": "",
    "trace_path": "trace.csv",
    "metrics_path": "metrics.txt",
    "baseline": "false",
}


def parse_config_text(text: str) -> dict[str, str]:
    """Flat ``key = value`` lines into a dict; unknown keys are errors."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        if key not in _DEFAULTS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = val.strip()
    return values


def _get_float(kv, key):
    try:
        return float(kv[key])
    except ValueError:
        raise ConfigError(f"{key} must be a number, got {kv[key]!r}") from None


def _get_int(kv, key):
    try:
        return int(kv[key])
    except ValueError:
        raise ConfigError(f"{key} must be an integer, got {kv[key]!r}") from None


def _get_bool(kv, key):
    val = kv[key].strip().lower()
    if val in ("true", "1", "yes", "on"):
        return True
    if val in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"{key} must be a boolean, got {kv[key]!r}")


def build_run_config(overrides: dict[str, str]) -> RunConfig:
    """Resolve keys-with-defaults into a validated RunConfig."""
    kv = dict(_DEFAULTS)
    for key, val in overrides.items():
        if key not in _DEFAULTS:
            raise ConfigError(f"unknown key {key!r}")
        kv[key] = val

    theta = _get_float(kv, "theta_minutes") / 60.0
    if theta <= 0:
        raise ConfigError("theta_minutes must be positive")
    capacity = _get_float(kv, "capacity_mwh")
    storage_power = _get_float(kv, "storage_power_mw")
    try:
        controller = ControllerConfig(
            theta=theta,
            n_slots=_get_int(kv, "horizon_slots"),
            alpha=_get_float(kv, "alpha"),
            beta=_get_float(kv, "beta"),
            gamma=_get_float(kv, "gamma"),
            x_ref=_get_float(kv, "x_ref_mwh"),
            pg_min=_get_float(kv, "pg_min_mw"),
            pg_max=_get_float(kv, "pg_max_mw"),
            ps_min=-storage_power,
            ps_max=storage_power,
            x_min=0.0,
            x_max=capacity,
        )
    except ValueError as err:
        raise ConfigError(str(err)) from None

    scenario = ScenarioSpec(
        kind=kv["scenario"],
        demand_base_mw=_get_float(kv, "demand_base_mw"),
        res_base_mw=_get_float(kv, "res_base_mw"),
        peak_amplitude_fraction=_get_float(kv, "peak_amplitude_fraction"),
        peak_center_hour=_get_float(kv, "peak_center_hour"),
        peak_sigma_slots=_get_float(kv, "peak_sigma_slots"),
        start_hour=_get_float(kv, "start_hour"),
        load_csv=kv["load_csv"] or None,
        res_csv=kv["res_csv"] or None,
        csv_time_column=kv["csv_time_column"],
        csv_value_column=kv["csv_value_column"],
    )
    if scenario.kind not in ("gaussian_demand", "gaussian_res", "csv"):
        raise ConfigError(f"unknown scenario {scenario.kind!r}")

    if kv["duration_slots"]:
        duration_slots = _get_int(kv, "duration_slots")
    else:
        duration_slots = int(round(_get_float(kv, "duration_hours") / theta))

    rc = RunConfig(
        controller=controller,
        scenario=scenario,
        x_init_mwh=_get_float(kv, "x_init_mwh"),
        duration_slots=duration_slots,
        trace_path=kv["trace_path"],
        metrics_path=kv["metrics_path"],
        baseline=_get_bool(kv, "baseline"),
    )
    rc.validate()
    return rc


PRESET_NAMES = ("testcase1", "testcase2", "testcase3")


def bundled_profile_path(name: str) -> str:
    return str(resources.files("bessmpc").joinpath(f"data/{name}"))


def preset(name: str, overrides: dict[str, object] | None = None) -> RunConfig:
    """One of the three stock test cases, with optional overrides.

    ``testcase1``: 50 MW base demand with a gaussian peak at 5 pm.
    ``testcase2``: constant 50 MW demand, 5 MW RES base with a gaussian
    peak at 5 pm.  ``testcase3``: a bundled synthetic "realistic day"
    (demand and PV CSVs shipped with the package; they imitate the shape
    of real profiles and are not measured data).

    Overrides: amplitude, horizon, alpha, beta, gamma, x_init,
    duration_hours, trace, metrics, baseline.
    """
    if name not in PRESET_NAMES:
        raise ConfigError(f"unknown preset {name!r} (choose from {PRESET_NAMES})")
    kv: dict[str, str] = {
        "trace_path": f"{name}_trace.csv",
        "metrics_path": f"{name}_metrics.txt",
    }
    if name == "testcase1":
        kv.update(scenario="gaussian_demand", demand_base_mw="50",
                  peak_amplitude_fraction="0.5")
    elif name == "testcase2":
        # Studies the response to a RES fluctuation from normal operation
        # (storage first releases, then absorbs hardest at the peak), so it
        # starts at the reference rather than fully discharged.
        kv.update(scenario="gaussian_res", demand_base_mw="50", res_base_mw="5",
                  peak_amplitude_fraction="1.0", x_init_mwh="6")
    else:
        logger.info("testcase3 uses bundled synthetic realistic-day profiles, "
                    "not measured data")
        # This case studies day-long smoothing, not the cold-start charge
        # transient (that is testcase1's job), so it starts at the reference.
        kv.update(scenario="csv",
                  load_csv=bundled_profile_path("realistic_day_demand.csv"),
                  res_csv=bundled_profile_path("realistic_day_pv.csv"),
                  x_init_mwh="6")

    key_map = {
        "amplitude": "peak_amplitude_fraction",
        "horizon": "horizon_slots",
        "alpha": "alpha",
        "beta": "beta",
        "gamma": "gamma",
        "x_init": "x_init_mwh",
        "duration_hours": "duration_hours",
        "trace": "trace_path",
        "metrics": "metrics_path",
        "baseline": "baseline",
    }
    for key, val in (overrides or {}).items():
        if key not in key_map:
            raise ConfigError(f"unknown preset override {key!r}")
        if val is not None:
            kv[key_map[key]] = str(val)
    return build_run_config(kv)


def _format_float(x: float) -> str:
    return repr(float(x))


def write_trace(path: str, r: SimulationResult):
    times = r.times_h()
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write(TRACE_HEADER + "\n")
        for k in range(r.n_steps):
            handle.write(",".join([
                str(int(r.t[k])),
                _format_float(times[k]),
                _format_float(r.p_load[k]),
                _format_float(r.p_res[k]),
                _format_float(r.p_gen[k]),
                _format_float(r.p_sto[k]),
                _format_float(r.x[k]),
                f"{r.solve_times[k] * 1e3:.3f}",
            ]) + "\n")


def write_metrics(path: str, metrics: dict[str, float], extra: dict[str, object]):
    with open(path, "w", encoding="utf-8") as handle:
        for key, val in extra.items():
            handle.write(f"{key}={val}\n")
        for key, val in metrics.items():
            handle.write(f"{key}={_format_float(val)}\n")


def execute(rc: RunConfig) -> dict[str, float]:
    """Run one configuration (plus its no-storage baseline) to files."""
    rc.validate()
    pad = rc.controller.n_slots
    load, res = rc.scenario.materialize(rc.controller.theta, rc.duration_slots, pad)
    if rc.duration_slots > load.n_slots:
        raise ConfigError(
            f"duration of {rc.duration_slots} slots exceeds scenario data "
            f"({load.n_slots} slots)")

    result = run_closed_loop(load, res, rc.controller, rc.x_init_mwh,
                             n_steps=rc.duration_slots)
    baseline_cfg = dataclasses.replace(rc.controller, ps_min=0.0, ps_max=0.0)
    baseline = run_closed_loop(load, res, baseline_cfg, rc.x_init_mwh,
                               n_steps=rc.duration_slots)

    write_trace(rc.trace_path, result)
    if rc.baseline:
        base_path = _suffixed(rc.trace_path, "baseline")
        write_trace(base_path, baseline)
        logger.info("baseline trace written to %s", base_path)

    metrics = compute_metrics(result, baseline)
    write_metrics(rc.metrics_path, metrics, {
        "scenario": rc.scenario.kind,
        "n_steps": rc.duration_slots,
        "x_init_mwh": _format_float(rc.x_init_mwh),
    })
    logger.info("trace written to %s, metrics to %s", rc.trace_path, rc.metrics_path)
    logger.info("peak p_gen %.3f MW (baseline %.3f MW), mean solve %.2f ms",
                metrics["peak_p_gen_mw"], metrics["baseline_peak_p_gen_mw"],
                metrics["solve_time_mean_ms"])
    return metrics


def run(config_path: str) -> int:
    """Execute the run described by a config file; returns an exit code."""
    try:
        text = Path(config_path).read_text(encoding="utf-8")
    except OSError as err:
        logger.error("cannot read config: %s", err)
        return EXIT_DOMAIN_ERROR
    try:
        rc = build_run_config(parse_config_text(text))
        execute(rc)
    except (ConfigError, ProfileError, InfeasibleStepError, SocBoundViolation, OSError) as err:
        logger.error("%s", err)
        return EXIT_DOMAIN_ERROR
    return EXIT_OK


def _suffixed(path: str, suffix: str) -> str:
    p = Path(path)
    return str(p.with_name(f"{p.stem}_{suffix}{p.suffix}"))


def _parse_sweep(spec: str) -> tuple[str, list[str]]:
    key, sep, rest = spec.partition("=")
    values = [v for v in rest.split(",") if v != ""]
    if not sep or not key or not values:
        raise ConfigError(f"--sweep expects KEY=V1,V2,..., got {spec!r}")
    return key.strip(), values


def _sweep_paths(rc: RunConfig, key: str, value: str) -> RunConfig:
    tag = f"{key}_{value}".replace("/", "-")
    return dataclasses.replace(rc, trace_path=_suffixed(rc.trace_path, tag),
                               metrics_path=_suffixed(rc.metrics_path, tag))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="bessmpc",
        description="Receding-horizon battery dispatch simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a run described by a config file")
    p_run.add_argument("config", help="path to a flat key=value config file")
    p_run.add_argument("--baseline", action="store_true",
                       help="also write the no-storage baseline trace")
    p_run.add_argument("--sweep", metavar="KEY=V1,V2,...",
                       help="repeat the run for each value of one config key")

    p_preset = sub.add_parser("preset", help="run one of the stock test cases")
    p_preset.add_argument("name", choices=PRESET_NAMES)
    p_preset.add_argument("--amplitude", type=float, help="peak amplitude fraction")
    p_preset.add_argument("--horizon", type=int, help="horizon length in slots")
    p_preset.add_argument("--alpha", type=float)
    p_preset.add_argument("--beta", type=float)
    p_preset.add_argument("--gamma", type=float)
    p_preset.add_argument("--x-init", type=float, dest="x_init", help="initial SoC, MWh")
    p_preset.add_argument("--duration-hours", type=float, dest="duration_hours")
    p_preset.add_argument("--trace", help="trace CSV path")
    p_preset.add_argument("--metrics", help="metrics file path")
    p_preset.add_argument("--baseline", action="store_true",
                          help="also write the no-storage baseline trace")
    p_preset.add_argument("--sweep", metavar="KEY=V1,V2,...",
                          help="repeat the run for each value of one override")

    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return err.code if isinstance(err.code, int) else EXIT_USAGE

    try:
        if args.command == "run":
            text = Path(args.config).read_text(encoding="utf-8")
            kv = parse_config_text(text)
            if args.baseline:
                kv["baseline"] = "true"
            if args.sweep:
                key, values = _parse_sweep(args.sweep)
                for value in values:
                    kv_i = dict(kv)
                    kv_i[key] = value
                    rc = _sweep_paths(build_run_config(kv_i), key, value)
                    execute(rc)
            else:
                execute(build_run_config(kv))
        else:
            overrides = {key: getattr(args, key) for key in
                         ("amplitude", "horizon", "alpha", "beta", "gamma",
                          "x_init", "duration_hours", "trace", "metrics")}
            if args.baseline:
                overrides["baseline"] = "true"
            if args.sweep:
                key, values = _parse_sweep(args.sweep)
                if key not in overrides:
                    raise ConfigError(f"--sweep key {key!r} is not a preset override")
                for value in values:
                    overrides_i = dict(overrides)
                    overrides_i[key] = value
                    rc = _sweep_paths(preset(args.name, overrides_i), key, value)
                    execute(rc)
            else:
                execute(preset(args.name, overrides))
    except (ConfigError, ProfileError, InfeasibleStepError, SocBoundViolation, OSError) as err:
        logger.error("%s", err)
        return EXIT_DOMAIN_ERROR
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
