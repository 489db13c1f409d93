from pathlib import Path

PROJECT_PATH = Path(__file__).parent.parent.parent.absolute()
TEMPLATES_PATH = PROJECT_PATH / "templates"
CONFIGS_PATH = PROJECT_PATH / "configs"

RESPONSE_TEMPLATES_PATH = TEMPLATES_PATH / "responses"

DEFAULT_CONFIG_PATH = CONFIGS_PATH / "default.cfg"
INTERVENTIONS_OFF_CONFIG_PATH = CONFIGS_PATH / "interventions_off.cfg"
KAPPA_ZERO_CONFIG_PATH = CONFIGS_PATH / "kappa_zero.cfg"
