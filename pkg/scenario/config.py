"""Scenario configuration.

The scenario file is INI-style text. Every section is optional and an empty
file yields the default matrix of 27 + 36 + 36 scenarios:

    [simulation]   duration (s), seed, full, record_log
    [phy]          frame_duration, dl_fraction, channel_bw
    [link]         tx_power, g_tx, g_rx, noise_figure, bler_slope
    [pathloss.<model>]  parameters of one path-loss model, plus min_distance_m
    [mobility]     radius, trajectory, loop, margin, latency, update_interval
    [traffic]      video_trace, video_fps, audio_fps, audio_frame_bytes, ...
    [mac]          queue_limit, header_bytes, polling intervals, background_*
    [metrics]      window, d_proc, d_prop
    [case1]        speeds, mcs_modes, pathloss, service_class, enabled
    [case2]        pathloss_models, mcs_modes, speed, service_class, enabled
    [case3]        service_classes, mcs_modes, speed, pathloss, enabled
    [seeds]        <scenario-id> = seed
"""

from configparser import ConfigParser, Error as ConfigParserError
from pathlib import Path
from typing import Any, Dict, List, Optional, Type, Union
import logging

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from core.errors import ConfigError
from network.mac import MacConfig, SERVICE_CLASSES, ServiceClassKind
from network.mobility import HandoffPolicy, Trajectory, default_trajectory, load_trajectory
from network.traffic import SyntheticTraceSpec, TrafficConfig
from metrics.collector import MetricsConfig
from radio.amc import MCS_MODES
from radio.channel import LinkBudget, PATHLOSS_REGISTRY, PathLossModel, TxBudget, noise_floor_dbm
from radio.phy import PhyConfig


logger = logging.getLogger(__name__)

CASE1_SPEEDS = (50.0, 100.0, 150.0)
DEFAULT_SPEED = 50.0
CASE3_CLASSES = ("rtps", "nrtps", "ertps", "be")


class MobilityConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    radius: float = Field(default=200.0, gt=0, description="Cell radius in meters")
    cells: int = Field(default=7, description="Number of base stations")
    trajectory: Optional[str] = Field(default=None, description="Waypoint file; built-in loop when unset")
    loop: bool = True
    margin: float = Field(default=3.0, ge=0, description="Handoff hysteresis in dB")
    latency: float = Field(default=50.0, ge=0, description="Handoff outage in ms")
    update_interval: float = Field(default=5.0, gt=0, description="Position update period in ms")

    @model_validator(mode="after")
    def _check_cells(self) -> "MobilityConfig":
        if self.cells != 7:
            raise ValueError(f"only the 7-cell hexagonal layout is supported, got {self.cells}")
        return self

    @property
    def handoff(self) -> HandoffPolicy:
        return HandoffPolicy(margin=self.margin, latency=self.latency)

    def trajectory_for(self, speed: float) -> Trajectory:
        if self.trajectory:
            return load_trajectory(self.trajectory, speed, loop=self.loop)
        return default_trajectory(speed, self.radius)


class ScenarioConfig(BaseModel):
    """Everything one simulation run needs"""
    model_config = ConfigDict(frozen=True)

    scenario_id: str
    case: int = Field(default=0, ge=0, le=3)
    mcs_mode: str = "qpsk12"
    speed: float = Field(default=DEFAULT_SPEED, gt=0, description="km/h")
    pathloss: str = "free_space"
    service_class: str = "rtps"
    seed: int = 1
    duration: float = Field(default=300.0, gt=0, description="s")
    record_log: bool = False

    phy: PhyConfig = Field(default_factory=PhyConfig)
    tx: TxBudget = Field(default_factory=TxBudget)
    link: LinkBudget = Field(default_factory=LinkBudget)
    pathloss_model: PathLossModel = Field(default=None, validate_default=False)
    mobility: MobilityConfig = Field(default_factory=MobilityConfig)
    traffic: TrafficConfig = Field(default_factory=TrafficConfig)
    mac: MacConfig = Field(default_factory=MacConfig)
    metrics: MetricsConfig = Field(default_factory=MetricsConfig)

    @model_validator(mode="before")
    @classmethod
    def _resolve_names(cls, data: Any) -> Any:
        if not isinstance(data, dict):
            return data
        data = dict(data)
        data["mcs_mode"] = MCS_MODES.canonical(data.get("mcs_mode", "qpsk12"))
        data["pathloss"] = PATHLOSS_REGISTRY.canonical(data.get("pathloss", "free_space"))
        data["service_class"] = SERVICE_CLASSES.canonical(data.get("service_class", "rtps"))
        if data.get("pathloss_model") is None:
            data["pathloss_model"] = PATHLOSS_REGISTRY.require(data["pathloss"])()
        return data

    @model_validator(mode="after")
    def _check_consistency(self) -> "ScenarioConfig":
        if SERVICE_CLASSES.require(self.service_class).kind is ServiceClassKind.UGS:
            raise ValueError(
                f"{self.scenario_id}: the audio/video flows are variable-bit-rate and cannot use UGS"
            )
        if self.pathloss_model.kind != self.pathloss:
            raise ValueError(
                f"{self.scenario_id}: path-loss model '{self.pathloss_model.kind}' does not match '{self.pathloss}'"
            )
        return self


def scenario_id(case: int, mcs_mode: str, speed: float = DEFAULT_SPEED, pathloss: str = "",
                service_class: str = "") -> str:
    if case == 1:
        label = f"{int(speed):03d}" if float(speed).is_integer() else f"{speed:05.1f}".replace(".", "p")
        return f"c1-{label}kmh-{mcs_mode}"
    if case == 2:
        return f"c2-{pathloss}-{mcs_mode}"
    if case == 3:
        return f"c3-{service_class}-{mcs_mode}"
    raise ConfigError(f"Unknown case {case}")


class ScenarioMatrix(BaseModel):
    scenarios: List[ScenarioConfig]

    @model_validator(mode="after")
    def _check_unique(self) -> "ScenarioMatrix":
        seen = set()
        for cfg in self.scenarios:
            if cfg.scenario_id in seen:
                raise ValueError(f"duplicate scenario id {cfg.scenario_id}")
            seen.add(cfg.scenario_id)
        return self

    def __len__(self) -> int:
        return len(self.scenarios)

    def case(self, number: int) -> List[ScenarioConfig]:
        return [cfg for cfg in self.scenarios if cfg.case == number]

    def case_sizes(self) -> Dict[int, int]:
        sizes: Dict[int, int] = {}
        for cfg in self.scenarios:
            sizes[cfg.case] = sizes.get(cfg.case, 0) + 1
        return sizes

    def get(self, scenario_id: str) -> Optional[ScenarioConfig]:
        for cfg in self.scenarios:
            if cfg.scenario_id == scenario_id:
                return cfg
        return None


KNOWN_SECTIONS = {
    "simulation", "phy", "link", "mobility", "traffic", "mac", "metrics",
    "case1", "case2", "case3", "seeds",
}


def _split(value: str) -> List[str]:
    return [item.strip() for item in value.replace("\n", ",").split(",") if item.strip()]


def _section_values(parser: ConfigParser, section: str) -> Dict[str, str]:
    if not parser.has_section(section):
        return {}
    return {key: value for key, value in parser.items(section, raw=True)}


def _build(model: Type[BaseModel], section: str, values: Dict[str, Any]) -> BaseModel:
    unknown = sorted(set(values) - set(model.model_fields))
    if unknown:
        raise ConfigError(
            f"[{section}] unknown option(s) {', '.join(unknown)}; valid options: {', '.join(model.model_fields)}"
        )
    try:
        return model(**values)
    except ValidationError as e:
        raise ConfigError(f"[{section}] {e}")


def _mcs_modes(values: Dict[str, str]) -> List[str]:
    raw = values.pop("mcs_modes", "all")
    if raw.strip().lower() == "all":
        return MCS_MODES.names()
    return [MCS_MODES.canonical(name) for name in _split(raw)]


def _enabled(values: Dict[str, str], section: str) -> bool:
    raw = values.pop("enabled", "true").strip().lower()
    if raw not in ("true", "false", "yes", "no", "1", "0", "on", "off"):
        raise ConfigError(f"[{section}] enabled must be a boolean, got '{raw}'")
    return raw in ("true", "yes", "1", "on")


def _floats(raw: str, section: str, option: str) -> List[float]:
    try:
        return [float(item) for item in _split(raw)]
    except ValueError:
        raise ConfigError(f"[{section}] {option} must be a list of numbers, got '{raw}'")


def _no_leftovers(values: Dict[str, str], section: str) -> None:
    if values:
        raise ConfigError(f"[{section}] unknown option(s) {', '.join(sorted(values))}")


def _pathloss_models(parser: ConfigParser) -> Dict[str, PathLossModel]:
    models: Dict[str, PathLossModel] = {}
    for name in PATHLOSS_REGISTRY.names():
        model_cls = PATHLOSS_REGISTRY.require(name)
        values = _section_values(parser, f"pathloss.{name}")
        top: Dict[str, Any] = {}
        if "min_distance_m" in values:
            top["min_distance_m"] = values.pop("min_distance_m")
        params_cls = model_cls.model_fields["params"].annotation
        params = _build(params_cls, f"pathloss.{name}", values)
        try:
            models[name] = model_cls(params=params, **top)
        except ValidationError as e:
            raise ConfigError(f"[pathloss.{name}] {e}")
    return models


def parse_config_text(text: str, source: str = "<config>", duration: Optional[float] = None,
                      seed: Optional[int] = None, full: Optional[bool] = None) -> ScenarioMatrix:
    """Build the scenario matrix from config text; keyword arguments override [simulation]"""
    parser = ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except ConfigParserError as e:
        raise ConfigError(f"{source}: {e}")

    for section in parser.sections():
        if section not in KNOWN_SECTIONS and not section.startswith("pathloss."):
            raise ConfigError(f"{source}: unknown section [{section}]; valid sections: "
                              f"{', '.join(sorted(KNOWN_SECTIONS))}, pathloss.<model>")
        if section.startswith("pathloss."):
            PATHLOSS_REGISTRY.require(section.split(".", 1)[1])

    simulation = _section_values(parser, "simulation")
    try:
        base_seed = int(seed if seed is not None else simulation.pop("seed", "1"))
        sim_duration = float(duration if duration is not None else simulation.pop("duration", "300"))
        full_run = full if full is not None else simulation.pop("full", "false").strip().lower() in ("true", "yes", "1", "on")
        record_log = simulation.pop("record_log", "false").strip().lower() in ("true", "yes", "1", "on")
    except ValueError as e:
        raise ConfigError(f"[simulation] {e}")
    for key in ("seed", "duration", "full"):
        simulation.pop(key, None)
    _no_leftovers(simulation, "simulation")

    link_values = _section_values(parser, "link")
    tx = _build(TxBudget, "link", {k: link_values.pop(k) for k in list(link_values) if k in TxBudget.model_fields})
    noise_figure = link_values.pop("noise_figure", None)
    if noise_figure is not None:
        try:
            link_values["noise_floor"] = noise_floor_dbm(noise_figure_db=float(noise_figure))
        except ValueError:
            raise ConfigError(f"[link] noise_figure must be a number, got '{noise_figure}'")
    link = _build(LinkBudget, "link", link_values)

    phy = _build(PhyConfig, "phy", _section_values(parser, "phy"))
    mobility = _build(MobilityConfig, "mobility", _section_values(parser, "mobility"))
    traffic_values = _section_values(parser, "traffic")
    synthetic_values = {k[len("synthetic_"):]: traffic_values.pop(k) for k in list(traffic_values)
                        if k.startswith("synthetic_")}
    if synthetic_values:
        traffic_values["synthetic"] = _build(SyntheticTraceSpec, "traffic", synthetic_values)
    traffic = _build(TrafficConfig, "traffic", traffic_values)
    mac = _build(MacConfig, "mac", _section_values(parser, "mac"))
    metrics = _build(MetricsConfig, "metrics", _section_values(parser, "metrics"))
    models = _pathloss_models(parser)

    if full_run:
        sim_duration = traffic.video().duration
        logger.info(f"Full-length run: duration set to {sim_duration:.1f} s")
    if sim_duration <= 0:
        raise ConfigError(f"[simulation] duration must be positive, got {sim_duration}")

    seeds_section = _section_values(parser, "seeds")
    shared = dict(phy=phy, tx=tx, link=link, mobility=mobility, traffic=traffic, mac=mac,
                  metrics=metrics, duration=sim_duration, record_log=record_log)
    entries: List[Dict[str, Any]] = []

    case1 = _section_values(parser, "case1")
    if _enabled(case1, "case1"):
        modes = _mcs_modes(case1)
        speeds = _floats(case1.pop("speeds", ""), "case1", "speeds") or list(CASE1_SPEEDS)
        pathloss = PATHLOSS_REGISTRY.canonical(case1.pop("pathloss", "free_space"))
        service_class = case1.pop("service_class", "rtps")
        _no_leftovers(case1, "case1")
        for speed in speeds:
            for mode in modes:
                entries.append(dict(case=1, mcs_mode=mode, speed=speed, pathloss=pathloss,
                                    service_class=service_class,
                                    scenario_id=scenario_id(1, mode, speed=speed)))

    case2 = _section_values(parser, "case2")
    if _enabled(case2, "case2"):
        modes = _mcs_modes(case2)
        names = [PATHLOSS_REGISTRY.canonical(n) for n in _split(case2.pop("pathloss_models", ""))] \
            or PATHLOSS_REGISTRY.names()
        speed = float(_floats(case2.pop("speed", str(DEFAULT_SPEED)), "case2", "speed")[0])
        service_class = case2.pop("service_class", "rtps")
        _no_leftovers(case2, "case2")
        for name in names:
            for mode in modes:
                entries.append(dict(case=2, mcs_mode=mode, speed=speed, pathloss=name,
                                    service_class=service_class,
                                    scenario_id=scenario_id(2, mode, pathloss=name)))

    case3 = _section_values(parser, "case3")
    if _enabled(case3, "case3"):
        modes = _mcs_modes(case3)
        classes = [SERVICE_CLASSES.canonical(n) for n in _split(case3.pop("service_classes", ""))] \
            or list(CASE3_CLASSES)
        speed = float(_floats(case3.pop("speed", str(DEFAULT_SPEED)), "case3", "speed")[0])
        pathloss = PATHLOSS_REGISTRY.canonical(case3.pop("pathloss", "free_space"))
        _no_leftovers(case3, "case3")
        for service_class in classes:
            for mode in modes:
                entries.append(dict(case=3, mcs_mode=mode, speed=speed, pathloss=pathloss,
                                    service_class=service_class,
                                    scenario_id=scenario_id(3, mode, service_class=service_class)))

    known_ids = {entry["scenario_id"] for entry in entries}
    for key in seeds_section:
        if key not in known_ids:
            raise ConfigError(f"[seeds] unknown scenario id '{key}'")

    scenarios = []
    for entry in entries:
        raw_seed = seeds_section.get(entry["scenario_id"], base_seed)
        try:
            entry_seed = int(raw_seed)
        except ValueError:
            raise ConfigError(f"[seeds] {entry['scenario_id']} must be an integer, got '{raw_seed}'")
        try:
            scenarios.append(ScenarioConfig(
                seed=entry_seed,
                pathloss_model=models[entry["pathloss"]],
                **entry,
                **shared,
            ))
        except ValidationError as e:
            raise ConfigError(f"{entry['scenario_id']}: {e}")

    try:
        matrix = ScenarioMatrix(scenarios=scenarios)
    except ValidationError as e:
        raise ConfigError(str(e))
    logger.info(f"Parsed {source}: {len(matrix)} scenarios {matrix.case_sizes()}")
    return matrix


def parse_config(path: Union[str, Path, None] = None, **overrides) -> ScenarioMatrix:
    """Read a scenario file; ``None`` gives the default matrix"""
    if path is None:
        return parse_config_text("", **overrides)
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"Cannot read config {path}: {e}")
    return parse_config_text(text, source=str(path), **overrides)
