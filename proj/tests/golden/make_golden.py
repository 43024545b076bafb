"""Writes the ERPT golden files with a writer independent of the C++ code."""
import math
import pathlib
import struct

HERE = pathlib.Path(__file__).resolve().parent


def erpt(dtype, c, h, w, values):
    head = b"ERPT" + struct.pack("<IBIII", 1, dtype, c, h, w)
    fmt = "<%d%s" % (len(values), "f" if dtype == 0 else "B")
    return head + struct.pack(fmt, *values)


def main():
    c, h, w = 2, 3, 4
    floats = [math.sin(0.5 * i) * (i - 7) for i in range(c * h * w)]
    (HERE / "float_2x3x4.erpt").write_bytes(erpt(0, c, h, w, floats))
    labels = [(7 * i + 3) % 256 for i in range(1 * 4 * 5)]
    (HERE / "labels_1x4x5.erpt").write_bytes(erpt(1, 1, 4, 5, labels))
    # Expected values as text (float32-rounded, 9 significant digits).
    rounded = [struct.unpack("<f", struct.pack("<f", v))[0] for v in floats]
    (HERE / "float_2x3x4.txt").write_text(" ".join("%.9g" % v for v in rounded) + "\n")
    (HERE / "labels_1x4x5.txt").write_text(" ".join(str(v) for v in labels) + "\n")


if __name__ == "__main__":
    main()
