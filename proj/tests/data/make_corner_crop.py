"""Writes corner_crop_16x16.txt: bilinear crop of a 16x16 test frame around a
bbox touching the top-left corner, ratio 1.5, output 8x8, values / 255."""
import numpy as np

H = W = 16
r, c, ch = np.meshgrid(np.arange(H), np.arange(W), np.arange(3), indexing="ij")
frame = ((r * 16 + c * 7 + ch * 50) % 256).astype(np.float64)

x_tl, y_tl, x_br, y_br = 0.0, 0.0, 4.0, 6.0
ratio, out_h, out_w = 1.5, 8, 8
cx, cy = (x_tl + x_br) / 2, (y_tl + y_br) / 2
hw, hh = ratio * (x_br - x_tl) / 2, ratio * (y_br - y_tl) / 2
# output samples span the first to the last pixel center of the region
ys = np.linspace(cy - hh, cy + hh - 1, out_h)
xs = np.linspace(cx - hw, cx + hw - 1, out_w)

out = np.zeros((out_h, out_w, 3))
for i, y in enumerate(ys):
    for j, x in enumerate(xs):
        if not (0 <= y <= H - 1 and 0 <= x <= W - 1):
            continue
        y0, x0 = int(np.floor(y)), int(np.floor(x))
        y1, x1 = min(y0 + 1, H - 1), min(x0 + 1, W - 1)
        wy, wx = y - y0, x - x0
        out[i, j] = ((1 - wy) * (1 - wx) * frame[y0, x0] + (1 - wy) * wx * frame[y0, x1]
                     + wy * (1 - wx) * frame[y1, x0] + wy * wx * frame[y1, x1])
out /= 255.0

with open("corner_crop_16x16.txt", "w") as f:
    f.write(f"{out_h} {out_w}\n")
    for v in out.reshape(-1):
        f.write(f"{v:.17g}\n")
