#!/usr/bin/env python3
"""Writes the golden byte streams for the bridge protocol tests.

Independent encoder: it shares no code with the C++ implementation. The scripted session is
Hello, Reset(1234), three Steps and Close against a 4x4x3 "fake" environment with a
continuous 3-d action head. Run from this directory: python3 make_bridge_golden.py
"""
import struct

H, W, C = 4, 4, 3
BOUNDS = [(-1.0, 1.0), (0.0, 1.0), (0.0, 1.0)]
MAX_STEPS = 10
SEED = 1234
ACTIONS = [(0.25, 0.5, 0.0), (-1.0, 1.0, 0.125), (0.5, 0.0, 1.0)]


def frame(tag, payload=b""):
    return struct.pack("<IB", 1 + len(payload), tag) + payload


def string(s):
    b = s.encode()
    return struct.pack("<I", len(b)) + b


def reset_pixels(seed):
    return bytes((seed + i) % 256 for i in range(H * W * C))


def step_pixels(t):
    return bytes((t * 7 + i * 3) % 256 for i in range(H * W * C))


def obs(reward, done, pixels):
    return frame(0x05, struct.pack("<dB", reward, 1 if done else 0) + pixels)


client = frame(0x01, struct.pack("<I", 1))
client += frame(0x03, struct.pack("<Q", SEED))
for a in ACTIONS:
    client += frame(0x04, struct.pack("<I", len(a)) + struct.pack("<%dd" % len(a), *a))
client += frame(0x07)

hs = struct.pack("<I", 1) + string("fake") + struct.pack("<IIIBI", H, W, C, 0, len(BOUNDS))
for lo, hi in BOUNDS:
    hs += struct.pack("<dd", lo, hi)
hs += struct.pack("<I", MAX_STEPS)
server = frame(0x02, hs)
server += obs(0.0, False, reset_pixels(SEED))
for t, a in enumerate(ACTIONS, start=1):
    server += obs(t * 0.5 - a[0], t == 3, step_pixels(t))

with open("bridge_client.bin", "wb") as f:
    f.write(client)
with open("bridge_server.bin", "wb") as f:
    f.write(server)
