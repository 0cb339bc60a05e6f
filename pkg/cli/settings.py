"""
Run settings: environment defaults, then a key=value file, then command line flags.
"""
from typing import Any, Dict, List, Optional

from config.config import DEFAULT_REPS, DEFAULT_SEED, DEFAULT_SLOTS, DEFAULT_WORKERS
from model.arrivals import ArrivalModel, BernoulliArrivals, parse_arrivals
from policies.policies import CTP_LATCH_ONCE, CTP_RELATCH_AFTER_TX
from sim.simulator import SimConfig
from util.errors import ConfigError
from util.utils import load_run_config, parse_float_list

KNOWN_KEYS = (
    'mode', 'policy', 'receiver', 'arrivals', 'rx_arrivals', 'b_max', 'rx_b_max', 'p', 'q', 'seed',
    'slots', 'reps', 'warmup', 'rate_prefactor', 'ctp_relatch', 'rx_on_cost', 'rx_gamma', 'c',
    'grid.kind', 'grid.b_max', 'grid.p', 'grid.q', 'workers',
)

DEFAULT_SETTINGS = {
    'mode': 'tx_only',
    'policy': 'cfp',
    'receiver': 'auto',
    'b_max': '10',
    'rx_b_max': '1',
    'seed': str(DEFAULT_SEED),
    'slots': str(DEFAULT_SLOTS),
    'reps': str(DEFAULT_REPS),
    'workers': str(DEFAULT_WORKERS),
    'rate_prefactor': 'auto',
    'ctp_relatch': 'false',
    'rx_on_cost': '1',
    'c': '0',
    'grid.kind': 'bernoulli',
    'grid.p': '0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9',
    'grid.q': '',
    'grid.b_max': '10',
}

# Flag destinations that map onto settings keys
FLAG_KEYS = {
    'mode': 'mode', 'policy': 'policy', 'receiver': 'receiver', 'arrivals': 'arrivals',
    'rx_arrivals': 'rx_arrivals', 'b_max': 'b_max', 'rx_b_max': 'rx_b_max', 'p': 'p', 'q': 'q',
    'seed': 'seed', 'slots': 'slots', 'reps': 'reps', 'warmup': 'warmup', 'rate_prefactor': 'rate_prefactor',
    'rx_on_cost': 'rx_on_cost', 'rx_gamma': 'rx_gamma', 'c': 'c', 'workers': 'workers',
    'grid_kind': 'grid.kind', 'grid_p': 'grid.p', 'grid_q': 'grid.q', 'grid_b_max': 'grid.b_max',
}

TRUE_VALUES = ('1', 'true', 'yes', 'on')
FALSE_VALUES = ('0', 'false', 'no', 'off')


def resolve_settings(config_path: Optional[str], flags: Dict[str, Any]) -> Dict[str, str]:
    """
    Merge defaults, the run config file and flags; later sources win.

    Raises:
        ConfigError: On unknown keys in the file
    """
    settings = dict(DEFAULT_SETTINGS)
    from_file = load_run_config(config_path)
    unknown = sorted(set(from_file) - set(KNOWN_KEYS))
    if unknown:
        raise ConfigError(f"Unknown keys in {config_path}: {', '.join(unknown)}")
    settings.update(from_file)

    for dest, key in FLAG_KEYS.items():
        value = flags.get(dest)
        if value is not None:
            settings[key] = str(value)
    if flags.get('ctp_relatch'):
        settings['ctp_relatch'] = 'true'
    return settings


def get_float(settings: Dict[str, str], key: str) -> float:
    try:
        return float(settings[key])
    except KeyError:
        raise ConfigError(f"Missing setting '{key}'")
    except ValueError:
        raise ConfigError(f"Setting '{key}' must be a number, got {settings[key]!r}")


def get_optional_float(settings: Dict[str, str], key: str) -> Optional[float]:
    if settings.get(key) in (None, ''):
        return None
    return get_float(settings, key)


def get_int(settings: Dict[str, str], key: str) -> int:
    value = get_float(settings, key)
    if value != int(value):
        raise ConfigError(f"Setting '{key}' must be an integer, got {settings[key]!r}")
    return int(value)


def get_bool(settings: Dict[str, str], key: str) -> bool:
    value = settings.get(key, '').strip().lower()
    if value in TRUE_VALUES:
        return True
    if value in FALSE_VALUES or value == '':
        return False
    raise ConfigError(f"Setting '{key}' must be a boolean, got {settings[key]!r}")


def get_list(settings: Dict[str, str], key: str) -> List[float]:
    return parse_float_list(settings.get(key, ''), key)


def tx_arrivals_spec(settings: Dict[str, str]) -> str:
    """Transmitter arrivals: explicit spec, else Bernoulli(p) arrivals that fill the battery."""
    if settings.get('arrivals'):
        return settings['arrivals']
    if settings.get('p'):
        return f"bernoulli:p={get_float(settings, 'p'):g},e={get_float(settings, 'b_max'):g}"
    return 'bernoulli:p=0.5,e=10'


def rx_arrivals_spec(settings: Dict[str, str]) -> str:
    """Receiver arrivals: explicit spec, else unit Bernoulli(q) arrivals."""
    if settings.get('rx_arrivals'):
        return settings['rx_arrivals']
    if settings.get('q'):
        return f"bernoulli:p={get_float(settings, 'q'):g},e=1"
    return 'bernoulli:p=0.5,e=1'


def tx_arrival_model(settings: Dict[str, str]) -> ArrivalModel:
    return parse_arrivals(tx_arrivals_spec(settings))


def bernoulli_parameter(settings: Dict[str, str], key: str, spec: str) -> float:
    """The p (or q) setting, falling back to the parameter of a Bernoulli arrival spec."""
    if settings.get(key):
        return get_float(settings, key)
    model = parse_arrivals(spec)
    if not isinstance(model, BernoulliArrivals):
        raise ConfigError(f"Setting '{key}' is required when arrivals are {spec!r}")
    return model.p


def build_sim_config(settings: Dict[str, str], keep_trace: bool = False) -> SimConfig:
    """
    Typed simulation config from resolved settings.

    Raises:
        ConfigError: On any unparsable or inconsistent value
    """
    warmup = settings.get('warmup')
    return SimConfig(
        n_slots=get_int(settings, 'slots'),
        n_replications=get_int(settings, 'reps'),
        seed=get_int(settings, 'seed'),
        mode=settings['mode'],
        policy=settings['policy'],
        receiver=settings['receiver'],
        arrivals=tx_arrivals_spec(settings),
        rx_arrivals=rx_arrivals_spec(settings),
        b_max=get_float(settings, 'b_max'),
        rx_b_max=get_float(settings, 'rx_b_max'),
        rate_prefactor=settings['rate_prefactor'],
        ctp_gate=CTP_RELATCH_AFTER_TX if get_bool(settings, 'ctp_relatch') else CTP_LATCH_ONCE,
        rx_on_cost=get_float(settings, 'rx_on_cost'),
        rx_gamma=get_optional_float(settings, 'rx_gamma'),
        warmup_slots=get_int(settings, 'warmup') if warmup not in (None, '') else None,
        workers=get_int(settings, 'workers'),
        keep_trace=keep_trace,
    )
