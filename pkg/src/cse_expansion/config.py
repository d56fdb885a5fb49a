import os

import dask.config
import yaml

config = dask.config.config

fn = os.path.join(os.path.dirname(__file__), "cse_expansion.yaml")
with open(fn) as f:
    defaults = yaml.safe_load(f)

dask.config.update_defaults(defaults)


def get(key: str, value=None):
    """Shorthand for ``dask.config.get("cse." + key)``.

    Explicit non-``None`` values win over the configuration, which
    lets functions take ``None`` defaults for every tunable.
    """
    if value is not None:
        return value
    return dask.config.get(f"cse.{key}")
