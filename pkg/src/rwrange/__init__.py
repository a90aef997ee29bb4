"""Random-walk range laws and discrete potential theory on weighted graphs."""

__version__ = "0.1.0"
