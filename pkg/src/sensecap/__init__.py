"""sensecap: power profiles and achievable rates for a sensing cognitive secondary user."""

__version__ = "0.1.0"
