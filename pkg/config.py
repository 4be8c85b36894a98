"""
Configuration management for the G-expectation pricing engine.
"""
import os

from dotenv import load_dotenv

load_dotenv()


class Config:
    """Configuration class for the pricing engine."""

    # Picard inner iteration
    PICARD_TOL = float(os.getenv('PICARD_TOL', 1e-6))
    PICARD_MAX_ITERS = int(os.getenv('PICARD_MAX_ITERS', 100))

    # Mesh-condition enforcement: error | warn | ignore
    MESH_ENFORCEMENT = os.getenv('MESH_ENFORCEMENT', 'warn').lower()

    # Reference solutions: full | fast
    REFERENCE_PRESET = os.getenv('REFERENCE_PRESET', 'full').lower()
    CACHE_DIR = os.getenv('CACHE_DIR', '.reference_cache')

    # Output settings
    OUTPUT_FORMAT = os.getenv('OUTPUT_FORMAT', 'csv').lower()

    # Logging settings
    LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO').upper()
    LOG_FILE = os.getenv('LOG_FILE', 'gpricing.log')

    @classmethod
    def to_dict(cls):
        """Convert configuration to dictionary."""
        return {
            'picard_tol': cls.PICARD_TOL,
            'picard_max_iters': cls.PICARD_MAX_ITERS,
            'mesh_enforcement': cls.MESH_ENFORCEMENT,
            'reference_preset': cls.REFERENCE_PRESET,
            'cache_dir': cls.CACHE_DIR,
            'output_format': cls.OUTPUT_FORMAT,
            'log_level': cls.LOG_LEVEL,
        }
