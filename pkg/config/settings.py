import os
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()


class Setting:
    BASE_DIR: Path = Path(__file__).parent.parent

    CONFIG_DIR: Path = BASE_DIR / "config"
    TEMPLATE_DIR: Path = CONFIG_DIR / "templates"

    DEFAULT_RUN_CONFIG_PATH: Path = CONFIG_DIR / "pipeline.yaml"
    LANE_PLOT_TEMPLATE: str = "lane_plot.svg.j2"

    # 输出根目录，可由环境变量覆盖
    OUTPUT_DIR: Path = Path(os.getenv("A3L_OUTPUT_DIR") or BASE_DIR / "output")

    def output_root(self) -> Path:
        """Re-read the override so tests can patch the environment."""
        override = os.getenv("A3L_OUTPUT_DIR")
        return Path(override) if override else self.OUTPUT_DIR


setting = Setting()
