"""Depth-image collision avoidance at desk scale.

A semantically-weighted variational autoencoder compresses noisy depth
frames while preserving thin obstacles; a recurrent collision predictor
scores candidate action sequences over that latent code; an
uncertainty-aware motion-primitive planner closes the loop inside a
bundled 3D depth-camera simulator.
"""

__version__ = "0.1.0"
