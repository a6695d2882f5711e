"""Generate an obstacle course, fly the camera through it, and dump what the
depth sensor sees: clean render, corrupted render, validity and semantics.

Writes PGM images you can open with any viewer into demos/out/camera/.
"""

from pathlib import Path

import numpy as np

from depthnav.camera import CameraModel, NoiseParams, corrupt, render, write_pgm
from depthnav.world import desk_world_params, generate_world, world_summary

out = Path(__file__).parent / "out" / "camera"
out.mkdir(parents=True, exist_ok=True)

# a dense desk-scale course: 45 m of large obstacles giving way to thin rods
world = generate_world(desk_world_params("dense", seed=7))
print(world_summary(world))

cam = CameraModel()  # 60x80, 87x58 deg FOV, 5 m range
noise = NoiseParams()

# three viewpoints: large-obstacle section, mixed section, rods-only section
for name, x in [("large", 2.0), ("mixed", 18.0), ("rods", 32.0)]:
    frame = render(world, cam, [x, 7.5, 1.0], yaw=0.0)
    noisy = corrupt(frame, noise.with_seed(hash(name) % 2**32), max_range=cam.max_range)
    thin_px = int((frame.seg > 0).sum())
    dropped = int((frame.seg > 0).sum() - (noisy.seg > 0).sum())
    print(f"{name:6s}: {frame.valid.mean():.0%} valid, {thin_px:4d} thin px "
          f"({dropped} lost to noise)")
    write_pgm(out / f"{name}_depth.pgm", (frame.x * 65534).astype(np.uint16), 65535)
    write_pgm(out / f"{name}_noisy.pgm", (noisy.x * 65534).astype(np.uint16), 65535)
    write_pgm(out / f"{name}_valid.pgm", noisy.valid * 255, 255)
    write_pgm(out / f"{name}_seg.pgm", (np.minimum(noisy.seg, 1) * 255).astype(np.uint8), 255)

print(f"\nwrote images to {out}")
