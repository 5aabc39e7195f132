from .render import KINDS, FigureJob, SchemaError, read_table, render

__version__ = "0.1.0"
