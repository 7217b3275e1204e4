import sys

import hydra
from hydra.core.hydra_config import HydraConfig
from omegaconf import DictConfig

from vola.cli import run_config


@hydra.main(version_base=None, config_path="conf", config_name="config")
def main(cfg: DictConfig) -> None:
    code = run_config(cfg, config_path=HydraConfig.get().job.config_name)
    if code:
        sys.exit(code)


if __name__ == '__main__':
    main()
