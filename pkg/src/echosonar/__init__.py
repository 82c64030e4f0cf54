"""Acoustic FMCW sonar hand tracking with a built-in room simulator.

Subpackages and modules:

* :mod:`echosonar.chirp` - linear chirp synthesis and high-pass filtering
* :mod:`echosonar.acoustic_sim` - speaker / mic-array / hand echo simulator
* :mod:`echosonar.rangeprofile` - matched filtering, anchoring, range cuts
* :mod:`echosonar.dataset` - feature windows, label alignment, file formats
* :mod:`echosonar.regressor` - CNN + LSTM joint regressor and training
* :mod:`echosonar.pose` - flexion angles and activation-pose detection
* :mod:`echosonar.cli` - the ``echo-sonar`` command
"""
from ._backend import BACKEND
from .chirp import ChirpSpec, SampleBuffer, generate_chirp
from .errors import EchoSonarError

__version__ = "0.1.0"

__all__ = ["BACKEND", "ChirpSpec", "EchoSonarError", "SampleBuffer", "generate_chirp", "__version__"]
