from .config import HarnessSettings, harness_settings

__all__ = ["HarnessSettings", "harness_settings"]
