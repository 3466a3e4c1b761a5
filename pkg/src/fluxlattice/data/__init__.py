"""Sample configuration files shipped with the package."""
