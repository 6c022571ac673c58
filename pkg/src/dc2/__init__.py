"""dc2: dual-camera defocus control toolkit.

Synthesizes wide/ultra-wide capture pairs from a thin-lens model, trains a
detail-fusion network on slice-to-slice refocus, and exposes post-capture
defocus control (deblur, bokeh, refocus, tilt-shift, masked effects) through
a CLI, an HTTP service and a browser studio.
"""

__version__ = "0.1.0"
