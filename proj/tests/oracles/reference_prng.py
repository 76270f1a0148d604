#!/usr/bin/env python3
"""Independent reference for the hashing and PRNG goldens frozen in the C++ tests.

FNV-1a 64 and splitmix64 are reimplemented here from their published
definitions, without sharing code with the library.
"""
MASK = (1 << 64) - 1


def fnv1a64(text: str) -> int:
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h ^= byte
        h = (h * 0x100000001B3) & MASK
    return h


def splitmix64(state: int):
    while True:
        state = (state + 0x9E3779B97F4A7C15) & MASK
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        yield z ^ (z >> 31)


if __name__ == "__main__":
    print("fnv1a64('')", hex(fnv1a64("")))
    print("fnv1a64('a')", hex(fnv1a64("a")))
    seed = fnv1a64("1|Delcroft|Quellman|Cinderfax")
    print("seed(1|Delcroft|Quellman|Cinderfax)", seed, hex(seed))
    print("seed(1|Quellman|Delcroft|Cinderfax)", hex(fnv1a64("1|Quellman|Delcroft|Cinderfax")))
    g = splitmix64(0)
    print("splitmix64(0) first 3", [hex(next(g)) for _ in range(3)])
    g = splitmix64(seed)
    coins = "".join(str(next(g) >> 63) for _ in range(32))
    print("coins over 32 slots from seed", coins)
    # entity choice for (1, Delcroft, Quellman)
    ents = ["Cinderfax", "Noiseweld", "Motelvine", "Brovencia", "Clevantra", "Teraluxis"]
    g = splitmix64(fnv1a64("1|Delcroft|Quellman"))
    print("entity(1|Delcroft|Quellman)", ents[next(g) % 6])
    # Fisher-Yates over 10 items after 8 coin draws
    g = splitmix64(seed)
    for _ in range(8):
        next(g)
    order = list(range(10))
    for i in range(9, 0, -1):
        j = next(g) % (i + 1)
        order[i], order[j] = order[j], order[i]
    print("perm10 after 8 flips", order)
