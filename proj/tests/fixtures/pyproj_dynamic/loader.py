import importlib
import os

name = os.environ.get("BACKEND")
backend = importlib.import_module(name)
other = __import__(name)
