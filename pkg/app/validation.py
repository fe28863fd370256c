# app/validation.py

"""
Validation of run configurations.

The cerberus schema mirrors ``TrainConfig``: every key, its type, range and whether it may be
null. String values (from ``--set key=value`` overrides) are coerced through the schema, so a
configuration file and the command line go through one path.
"""

import logging

from cerberus import Validator

from app.exceptions import ConfigError

ENV_NAMES = ['pointnav', 'hillclimb', 'cyclepattern']
ALGORITHMS = ['hilonet', 'tsre']
_NULLS = ('', 'none', 'null', '~')


def _nullable(convert):
    def coerce(value):
        if value is None or (isinstance(value, str) and value.strip().lower() in _NULLS):
            return None
        return convert(value)
    return coerce


def _to_bool(value):
    if isinstance(value, bool):
        return value
    if isinstance(value, str):
        lowered = value.strip().lower()
        if lowered in ('true', 'yes', '1', 'on'):
            return True
        if lowered in ('false', 'no', '0', 'off'):
            return False
    if isinstance(value, int):
        return bool(value)
    raise ValueError(f"not a boolean: {value!r}")


def _to_int(value):
    if isinstance(value, bool):
        raise ValueError(f"not an integer: {value!r}")
    if isinstance(value, float):
        if not value.is_integer():
            raise ValueError(f"not an integer: {value!r}")
        return int(value)
    return int(str(value).replace('_', ''))


def _to_float(value):
    if isinstance(value, bool):
        raise ValueError(f"not a number: {value!r}")
    return float(value)


def _to_sizes(value):
    if isinstance(value, str):
        value = [v for v in value.replace('[', '').replace(']', '').split(',') if v.strip()]
    return [_to_int(v) for v in value]


def _integer(minimum=None, nullable=False):
    rule = {'type': 'integer', 'coerce': _nullable(_to_int) if nullable else _to_int, 'nullable': nullable}
    if minimum is not None:
        rule['min'] = minimum
    return rule


def _number(minimum=None, maximum=None, nullable=False):
    rule = {'type': 'float', 'coerce': _nullable(_to_float) if nullable else _to_float, 'nullable': nullable}
    if minimum is not None:
        rule['min'] = minimum
    if maximum is not None:
        rule['max'] = maximum
    return rule


def _flag():
    return {'type': 'boolean', 'coerce': _to_bool}


CONFIG_SCHEMA = {
    'env_name': {'type': 'string', 'allowed': ENV_NAMES},
    'algo': {'type': 'string', 'allowed': ALGORITHMS},
    'demo_path': {'type': 'string', 'nullable': True, 'coerce': _nullable(str)},
    'n_demos': _integer(1, nullable=True),
    'demo_seed': _integer(0),
    'total_env_steps': _integer(0),
    'delta_t': _integer(1),
    'high_update_delay': _integer(1),
    'gamma': _number(0.0, 0.999999),
    'tau': _number(0.0, 1.0),
    'actor_lr': _number(0.0),
    'critic_lr': _number(0.0),
    'batch_size': _integer(1),
    'hidden_sizes': {'type': 'list', 'coerce': _to_sizes, 'minlength': 1,
                     'schema': {'type': 'integer', 'min': 1}},
    'noise_start': _number(0.0),
    'noise_end': _number(0.0),
    'eps': _number(1e-12, nullable=True),
    'eps_fraction': _number(1e-12, 1.0),
    'r_bonus': _number(1e-12),
    'alpha': _number(0.0),
    'low_buffer_capacity': _integer(1),
    'high_buffer_capacity': _integer(1, nullable=True),
    'warmup_steps': _integer(0),
    'eval_interval': _integer(1),
    'eval_episodes': _integer(1),
    'seed': _integer(0),
    'tsre_trajectory': _integer(0),
    'disable_hindsight': _flag(),
    'disable_delay': _flag(),
    'double_high_buffer': _flag(),
}


def _format_errors(errors):
    return '; '.join(f"{key}: {', '.join(str(m) for m in messages)}" for key, messages in sorted(errors.items()))


def validate_config(document):
    """
    Validate and coerce a configuration mapping.

    Args:
        document (dict): Raw key/value pairs (YAML-loaded and/or override strings).

    Returns:
        dict: The normalized document.

    Raises:
        ConfigError: Unknown keys, wrong types or out-of-range values; ``errors`` names each key.
    """
    if not isinstance(document, dict):
        raise ConfigError(f"Configuration must be a mapping, got {type(document).__name__}")
    validator = Validator(CONFIG_SCHEMA)
    if not validator.validate(document):
        errors = dict(validator.errors)
        logging.error(f"Invalid configuration: {_format_errors(errors)}")
        raise ConfigError(f"Invalid configuration: {_format_errors(errors)}", errors=errors)
    return validator.document


def parse_overrides(pairs):
    """
    Turn ``['key=value', ...]`` into a dict of raw strings.

    Raises:
        ConfigError: A pair without ``=`` or with an empty key.
    """
    overrides = {}
    for pair in pairs or []:
        key, sep, value = pair.partition('=')
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"Override '{pair}' is not of the form key=value", errors={pair: ['malformed override']})
        overrides[key] = value.strip()
    return overrides
