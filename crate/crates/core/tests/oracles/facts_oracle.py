"""Reference CNP decoding and adulthood counts for the facts fixtures.

    python3 tests/oracles/facts_oracle.py > tests/fixtures/facts_oracle.json
"""

import datetime as dt
import json
import random

WEIGHTS = "279146358279"
CENTURY = {"1": 1900, "2": 1900, "3": 1800, "4": 1800, "5": 2000, "6": 2000}


def control(body):
    r = sum(int(d) * int(w) for d, w in zip(body, WEIGHTS)) % 11
    return 1 if r == 10 else r


def decode(cnp):
    if int(cnp[12]) != control(cnp[:12]) or cnp[0] not in CENTURY:
        return None
    try:
        d = dt.date(CENTURY[cnp[0]] + int(cnp[1:3]), int(cnp[3:5]), int(cnp[5:7]))
    except ValueError:
        return None
    return d.isoformat()


def random_cnps(rng, n):
    out = []
    for _ in range(n):
        body = str(rng.randint(1, 9)) + "%02d%02d%02d%02d%03d" % (
            rng.randint(0, 99),
            rng.randint(1, 13),
            rng.randint(1, 31),
            rng.randint(1, 52),
            rng.randint(0, 999),
        )
        last = control(body) if rng.random() < 0.6 else rng.randint(0, 9)
        out.append(body + str(last))
    return out


def adult(birth, today):
    age = today.year - birth.year - ((today.month, today.day) < (birth.month, birth.day))
    return age >= 18


def eighteenth(birth):
    try:
        return birth.replace(year=birth.year + 18)
    except ValueError:
        return dt.date(birth.year + 18, 3, 1)


def adult_counts():
    counts = {}
    for year in range(1996, 2009):
        d = dt.date(year, 1, 1)
        n = 0
        while d.year == year:
            pivot = eighteenth(d)
            n += sum(adult(d, pivot + dt.timedelta(days=k)) for k in range(-3, 4))
            d += dt.timedelta(days=1)
        counts[str(year)] = n
    return counts


def main():
    rng = random.Random(20240611)
    cnps = [
        {"cnp": c, "checksum_ok": int(c[12]) == control(c[:12]), "birthdate": decode(c)}
        for c in random_cnps(rng, 1000)
    ]
    print(json.dumps({"cnps": cnps, "adult_counts": adult_counts()}, indent=1))


if __name__ == "__main__":
    main()
