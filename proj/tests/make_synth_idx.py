"""Write a small synthetic IDX dataset (blob-per-class images) for CLI tests."""
import struct
import sys
import random

out_dir = sys.argv[1]
n_train, n_test = int(sys.argv[2]), int(sys.argv[3])
rng = random.Random(7)

protos = []
for c in range(10):
    prng = random.Random(1000 + c)
    blobs = []
    for _ in range(3):
        cy, cx = prng.randint(2, 22), prng.randint(2, 22)
        blobs += [(cy + dy) * 28 + cx + dx for dy in range(4) for dx in range(4)]
    protos.append(blobs)


def write_split(prefix, n):
    images = bytearray()
    labels = bytearray()
    for _ in range(n):
        label = rng.randint(0, 9)
        img = bytearray(784)
        for p in protos[label]:
            img[p] = min(255, img[p] + rng.randint(120, 255))
        for _ in range(25):
            p = rng.randint(0, 783)
            img[p] = min(255, img[p] + rng.randint(0, 120))
        images += img
        labels.append(label)
    with open(f"{out_dir}/{prefix}-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x803, n, 28, 28))
        f.write(images)
    with open(f"{out_dir}/{prefix}-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x801, n))
        f.write(labels)


write_split("train", n_train)
write_split("t10k", n_test)
print(f"wrote {n_train}+{n_test} images to {out_dir}")
