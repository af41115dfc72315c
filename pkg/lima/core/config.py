import copy
import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional

import yaml

from lima.core.errors import ConfigError

logger = logging.getLogger("Lima.Config")

CONFIG_FILENAMES = ("lima.yml", "lima.yaml")

# Default Configuration
DEFAULT_CONFIG: Dict[str, Any] = {
    "scenario": {
        "area_side_km": 6.0,
        "ed_density_per_km2": 1.0,
        "traffic_period_s": 1800.0,
        "sim_hours": 20.0,
        "packet_app_bytes": 40,
        "n_lg": 1,
        "seed": 1,
        "mode": "lima",
        "adr_enabled": True,
        "dnof_enabled": True,
        "der_enabled": True,
        "region": "EU868",
        "min_lr_spacing_m": 1500.0,
        "ed_initial_sf": 12,
    },
    "radio": {
        "bw": 125000,
        "cr": 1,
        "preamble": 8,
        "noise_figure": 6.0,
        "path_loss": {
            "n": 3.76,
            "d0": 40.0,
            # None: calibrated from the anchor below at startup
            "pl0": None,
            "anchor_range_m": 3000.0,
            "anchor_sf": 12,
            "anchor_tx_power_dbm": 14,
            "accepted_range_m": [2700.0, 3300.0],
        },
        "shadowing_sigma_db": 0.0,
        "capture_db": 6.0,
        "duty_cycle": {
            "enabled": True,
            "limit": 0.01,
            "mesh_limit": 0.10,
        },
        "rx_window_symbols": 8,
        "energy": {
            "voltage": 3.3,
            "rx_ma": 11.0,
            "sleep_ua": 1.0,
            "tx_ma": {
                2: 24.0, 4: 25.0, 6: 28.0, 8: 32.0, 10: 38.0,
                12: 44.0, 14: 52.0, 16: 70.0, 18: 90.0, 20: 120.0,
            },
            "tx_ma_step_above_20": 10.0,
        },
    },
    "protocol": {
        "protocol_version": 0,
        "rem_period_s": 600.0,
        "rem_jitter_s": 1.0,
        "route_ttl_factor": 3,
        "max_backups": 4,
        "stagger_window_s": 0.5,
        "processing_delay_s": 0.025,
        "dm_ttl_s": 3600.0,
        "dnof_ttl_factor": 3,
        "queue_ttl_factor": 2,
        "dedup_capacity": 256,
        "dedup_ttl_s": 600.0,
        "history_depth": 5,
        "device_margin_db": 10.0,
        "adr_resend_uplinks": 6,
        "stp": {"sf": 7, "tx_power_dbm": 26},
        "ed_max_power_dbm": 14,
        "ed_min_power_dbm": 2,
        "max_duty_defer_s": 30.0,
    },
}


def load_config(config_path: Optional[Path] = None, root_path: Optional[Path] = None) -> Dict[str, Any]:
    """
    Load a scenario configuration and deep-merge it over DEFAULT_CONFIG.

    An explicit config_path must exist. Without one, lima.yml is looked up in
    root_path (default: cwd), then in its parent; if neither exists the defaults
    are returned.
    """
    if config_path is None:
        config_path = _discover(root_path or Path.cwd())
        if config_path is None:
            return copy.deepcopy(DEFAULT_CONFIG)
    config_path = Path(config_path)

    if not config_path.exists():
        raise ConfigError(f"config file not found: {config_path}")

    try:
        with open(config_path, "r", encoding="utf-8") as f:
            if config_path.suffix.lower() == ".json":
                user_config = json.load(f)
            else:
                user_config = yaml.safe_load(f)
    except (OSError, yaml.YAMLError, json.JSONDecodeError) as e:
        raise ConfigError(f"failed to load {config_path}: {e}") from e

    if user_config is not None and not isinstance(user_config, dict):
        raise ConfigError(f"{config_path}: top level must be a mapping")

    logger.debug("loaded config from %s", config_path)
    return _merge_config(DEFAULT_CONFIG, user_config)


def _discover(root_path: Path) -> Optional[Path]:
    for base in (root_path, root_path.parent):
        for name in CONFIG_FILENAMES:
            candidate = base / name
            if candidate.exists():
                return candidate
    return None


def _merge_config(default: Dict, user: Optional[Dict]) -> Dict:
    """Deep merge user config into default config."""
    result = copy.deepcopy(default)
    if not user:
        return result

    for key, value in user.items():
        if isinstance(value, dict) and key in result and isinstance(result[key], dict):
            result[key] = _merge_config(result[key], value)
        else:
            result[key] = value
    return result
