"""
Configuration de l'application
Gère le chargement des variables d'environnement et les paramètres du simulateur
"""
import logging
import os
from pathlib import Path

from dotenv import load_dotenv
from pydantic_settings import BaseSettings, SettingsConfigDict

# Charger les variables d'environnement depuis .env
load_dotenv()

PACKAGE_DIRECTORY = Path(__file__).resolve().parent


class Settings(BaseSettings):
    """Configuration du simulateur"""

    # Application Configuration
    app_name: str = os.getenv("APP_NAME", "Squint Bench - Simulateur de beam squint mmWave")
    app_version: str = os.getenv("APP_VERSION", "1.0.0")
    debug: bool = os.getenv("DEBUG", "False").lower() == "true"
    log_level: str = os.getenv("LOG_LEVEL", "INFO")

    # Données embarquées (matériaux, cartes, scénarios)
    data_directory: str = os.getenv("DATA_DIRECTORY", str(PACKAGE_DIRECTORY / "data"))
    output_directory: str = os.getenv("OUTPUT_DIRECTORY", "./results")

    # Grille angulaire et lancer de rayons
    theta_step_deg: float = float(os.getenv("THETA_STEP_DEG", "0.01"))
    lens_ray_count: int = int(os.getenv("LENS_RAY_COUNT", "2001"))
    max_discard_fraction: float = float(os.getenv("MAX_DISCARD_FRACTION", "0.2"))
    back_lobe_dbi: float = float(os.getenv("BACK_LOBE_DBI", "-30.0"))

    # Exécution
    threads: int = int(os.getenv("THREADS", "1"))

    model_config = SettingsConfigDict(env_file=".env", case_sensitive=False, extra="ignore")

    @property
    def materials_directory(self) -> Path:
        return Path(self.data_directory) / "materials"

    @property
    def maps_directory(self) -> Path:
        return Path(self.data_directory) / "maps"

    @property
    def scenarios_directory(self) -> Path:
        return Path(self.data_directory) / "scenarios"


# Instance globale des paramètres
settings = Settings()


def get_settings() -> Settings:
    """Retourne l'instance des paramètres"""
    return settings


def configure_logging(level: str | None = None) -> None:
    """Configure le logging de l'application (stderr, un logger par module)"""
    if settings.debug:
        level = "DEBUG"
    logging.basicConfig(
        level=(level or settings.log_level).upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
