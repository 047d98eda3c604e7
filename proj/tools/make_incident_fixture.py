"""Writes the synthetic incident fixture whose marginals the stats command reproduces."""
import csv
import random
import sys

# (country, reason, deaths, count)
INCIDENTS = [
    ("India", "Water", 7, 1), ("India", "HeightAndWater", 7, 1), ("India", "Water", 5, 1),
    ("India", "HeightAndWater", 3, 1), ("India", "Water", 3, 4), ("India", "HeightAndWater", 2, 5),
    ("India", "Water", 2, 1), ("India", "HeightAndWater", 1, 7), ("India", "Water", 1, 13),
    ("India", "Train", 1, 5), ("India", "Height", 1, 3), ("India", "Electricity", 1, 1), ("India", "Vehicle", 1, 1),
    ("Pakistan", "Train", 2, 1), ("Pakistan", "Height", 2, 1), ("Pakistan", "Train", 1, 2),
    ("Pakistan", "Water", 1, 1), ("Pakistan", "Height", 1, 1), ("Pakistan", "Vehicle", 1, 1),
    ("USA", "Height", 2, 1), ("USA", "Weapon", 1, 3), ("USA", "Vehicle", 1, 1), ("USA", "Height", 1, 1),
    ("USA", "Animal", 1, 1),
    ("Russia", "Height", 2, 1), ("Russia", "Weapon", 1, 2), ("Russia", "Height", 1, 1), ("Russia", "Electricity", 1, 1),
    ("Philippines", "Height", 2, 1), ("Philippines", "Height", 1, 1), ("Philippines", "Water", 1, 1),
    ("China", "Height", 2, 1), ("China", "Height", 1, 1), ("China", "Vehicle", 1, 1),
    ("Spain", "Height", 2, 1), ("Spain", "Height", 1, 1),
    ("Indonesia", "Water", 2, 1), ("Portugal", "Height", 2, 1), ("Peru", "Height", 2, 1),
    ("Turkey", "Train", 1, 1), ("Turkey", "Height", 1, 1),
    ("Romania", "Electricity", 1, 1), ("Australia", "Height", 1, 1), ("Mexico", "Vehicle", 1, 1),
    ("South Africa", "Animal", 1, 1), ("Italy", "Height", 1, 1), ("Serbia", "Train", 1, 1),
    ("Chile", "Water", 1, 1), ("Nepal", "Height", 1, 1), ("Hong Kong", "Vehicle", 1, 1),
]

GENDERS = ["M"] * 96 + ["F"] * 31
AGES = ["Under20"] * 41 + ["A20to24"] * 45 + ["A30plus"] * 17 + ["Unknown"] * 24
YEAR_DEATHS = {2014: 15, 2015: 39, 2016: 73}
MONTHS = {2014: range(3, 13), 2015: range(1, 13), 2016: range(1, 10)}


def assign_years(rows, rng):
    # Largest incidents first, each into the year with the most remaining room.
    remaining = dict(YEAR_DEATHS)
    order = sorted(range(len(rows)), key=lambda i: (-rows[i][2], rng.random()))
    years = [None] * len(rows)
    for i in order:
        year = max((y for y in remaining if remaining[y] >= rows[i][2]), key=lambda y: (remaining[y], -y))
        remaining[year] -= rows[i][2]
        years[i] = year
    assert all(v == 0 for v in remaining.values()), remaining
    return years


def main(path):
    rng = random.Random(20161108)
    rows = [(c, r, d) for c, r, d, n in INCIDENTS for _ in range(n)]
    rng.shuffle(rows)
    years = assign_years(rows, rng)
    genders, ages = GENDERS[:], AGES[:]
    rng.shuffle(genders)
    rng.shuffle(ages)
    dated = []
    for (country, reason, deaths), year in zip(rows, years):
        month = rng.choice(list(MONTHS[year]))
        dated.append(((year, month, rng.randint(1, 28)), country, reason, deaths))
    dated.sort()
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["incident_id", "date", "country", "reason", "deaths", "victim_genders", "victim_age_bands",
                    "synthetic"])
        k = 0
        for i, ((y, m, d), country, reason, deaths) in enumerate(dated, 1):
            g = "|".join(genders[k:k + deaths])
            a = "|".join(ages[k:k + deaths])
            k += deaths
            w.writerow([f"inc{i:03d}", f"{y:04d}-{m:02d}-{d:02d}", country, reason, deaths, g, a, "true"])
    assert k == 127


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "data/incidents.csv")
