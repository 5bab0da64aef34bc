"""Klein tunneling through oblique gate barriers in armchair graphene nanoribbons."""

__version__ = "0.1.0"
