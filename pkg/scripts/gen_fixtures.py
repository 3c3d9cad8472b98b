#!/usr/bin/env python3
"""Regenerate the deterministic synthetic fixtures under tests/fixtures/.

The fixture models a small study area: an 8-region grid with census
shares, 50 cross-like nodes (plus assorted anomalies), a 30-entry
reference register at controlled offsets, a lemma lexicon, and tagged
token files. Everything is seeded; rerunning reproduces identical files.
"""

from __future__ import annotations

import json
import math
import random
from pathlib import Path

EARTH_RADIUS_M = 6_371_008.8
M_PER_DEG = EARTH_RADIUS_M * math.pi / 180.0

OUT = Path(__file__).resolve().parent.parent / "tests" / "fixtures"

SNAPSHOT_TIME = "2023-05-23T00:00:00Z"

REGION_SIZE = 0.5
REGION_SHARES = [0.10, 0.20, 0.30, 0.40, 0.50, 0.60, 0.70, 0.80]
REGION_COUNTS = [1, 1, 2, 3, 9, 10, 11, 11]  # logistic-ish in the share
REGION_NAMES = [
    "Untergau",
    "Westmark",
    "Nordfeld",
    "Altland",
    "Mittgau",
    "Obermark",
    "Steinfeld",
    "Hochland",
]

NAME_POOL = [
    "Wegkreuz",
    "Feldkreuz",
    "Steinkreuz",
    "Kreuz",
    "Wegkreuz am Weg",
    "Neunerkreuz Nr. 3",
    "Rotes Kreuz",
    "Marterl",
]
INSCRIPTION_POOL = [
    "INRI",
    "INRI",
    "INRI 1850",
    "O Wanderer steh still und denk an mich",
    "Unser Herr ist hier gestorben 1887",
    "Zur Ehre Gottes errichtet von der Familie Huber 1902",
    "Hier ruht in Gott",
]
MATERIAL_POOL = ["wood", "wood", "wood", "stone", "stone", "metal", "sandstone"]
START_DATES = ["1850", "1887", "1902", "1960", "18th century"]


def region_origin(index: int) -> tuple[float, float]:
    row, col = divmod(index, 4)
    return 48.0 + row * REGION_SIZE, 11.0 + col * REGION_SIZE


def make_regions() -> dict:
    features = []
    for i in range(8):
        lat0, lon0 = region_origin(i)
        ring = [
            [lon0, lat0],
            [lon0 + REGION_SIZE, lat0],
            [lon0 + REGION_SIZE, lat0 + REGION_SIZE],
            [lon0, lat0 + REGION_SIZE],
            [lon0, lat0],
        ]
        features.append(
            {
                "type": "Feature",
                "properties": {
                    "region_id": f"R{i + 1}",
                    "name": REGION_NAMES[i],
                    "level": "county",
                    "area_km2": 100.0,
                },
                "geometry": {"type": "Polygon", "coordinates": [ring]},
            }
        )
    return {"type": "FeatureCollection", "features": features}


def make_census() -> str:
    lines = ["region_id;name;catholic_share;protestant_share;area_km2"]
    for i in range(8):
        share = REGION_SHARES[i]
        lines.append(f"R{i + 1};{REGION_NAMES[i]};{share:.2f};0.15;100.0")
    lines.append(";Namenlos;0.5;0.2;10.0")  # missing region_id, must be rejected
    return "\n".join(lines) + "\n"


def random_timestamp(rng: random.Random) -> str:
    # whole seconds between 2009-01-01 and 2023-05-01
    start = 1230768000
    end = 1682899200
    t = rng.randrange(start, end)
    import datetime as dt

    stamp = dt.datetime.fromtimestamp(t, tz=dt.timezone.utc)
    return stamp.strftime("%Y-%m-%dT%H:%M:%SZ")


def make_nodes(rng: random.Random):
    """50 match-category nodes (48 in regions, 2 outside) plus node ids."""
    special_categories = {
        5: {"historic": "wayside_shrine"},
        12: {"historic": "wayside_shrine"},
        20: {"man_made": "cross"},
        27: {"man_made": "cross", "summit:cross": "yes"},
        33: {"memorial": "cross"},
        40: {"summit:cross": "yes"},
        44: {"historic": "wayside_shrine"},
    }
    elements = []
    per_region_nodes: list[list[dict]] = [[] for _ in range(8)]
    node_id = 1001
    overall_index = 0
    for region_index in range(8):
        lat0, lon0 = region_origin(region_index)
        uid_base = 100 + region_index * 10
        uid_pool = [uid_base] * 6 + [uid_base + 1] * 2 + [uid_base + 2, uid_base + 3]
        for _ in range(REGION_COUNTS[region_index]):
            lat = rng.uniform(lat0 + 0.05, lat0 + REGION_SIZE - 0.05)
            lon = rng.uniform(lon0 + 0.05, lon0 + REGION_SIZE - 0.05)
            tags = dict(
                special_categories.get(overall_index, {"historic": "wayside_cross"})
            )
            if rng.random() < 0.25:
                tags["religion"] = "christian"
                if rng.random() < 0.6:
                    tags["denomination"] = "roman_catholic"
            if rng.random() < 0.30:
                tags["material"] = rng.choice(MATERIAL_POOL)
            if rng.random() < 0.35:
                tags["name"] = rng.choice(NAME_POOL)
            if rng.random() < 0.30:
                tags["inscription"] = rng.choice(INSCRIPTION_POOL)
            if rng.random() < 0.15:
                tags["start_date"] = rng.choice(START_DATES)
            if rng.random() < 0.10:
                tags["heritage"] = "4"
                tags["ref:BLfD"] = f"D-{rng.randrange(1000000, 9999999)}"
            if rng.random() < 0.08:
                tags["description"] = "Renoviert und neu gesegnet"
            uid = rng.choice(uid_pool)
            version = rng.choices([1, 2, 3, 4, 5, 7], weights=[70, 15, 8, 4, 2, 1])[0]
            node = {
                "type": "node",
                "id": node_id,
                "lat": round(lat, 7),
                "lon": round(lon, 7),
                "timestamp": random_timestamp(rng),
                "version": version,
                "user": f"user{uid}",
                "uid": uid,
                "tags": tags,
            }
            elements.append(node)
            per_region_nodes[region_index].append(node)
            node_id += 1
            overall_index += 1

    # anomalies on specific nodes: an overlong inscription, a workaround
    # suffix tag, one element newer than the snapshot
    per_region_nodes[7][0]["tags"]["inscription"] = (
        "Dieses Kreuz wurde im Jahre des Herrn 1887 errichtet zum Gedenken an "
        "alle Verstorbenen der Gemeinde und erinnert den Wanderer daran innezuhalten "
        "und ein stilles Gebet zu sprechen fuer die Seelen der Verstorbenen und das "
        "Wohlergehen aller die hier vorbeikommen auf ihren Wegen durch Feld und Flur"
    )
    per_region_nodes[7][1]["tags"]["inscription"] = "INRI"
    per_region_nodes[7][1]["tags"]["inscription_1"] = "Gesegnet sei der Wanderer"
    per_region_nodes[7][2]["timestamp"] = "2023-06-01T00:00:00Z"

    # two category nodes outside every region
    for lat, lon in [(47.7, 11.2), (47.7, 12.7)]:
        elements.append(
            {
                "type": "node",
                "id": node_id,
                "lat": lat,
                "lon": lon,
                "timestamp": random_timestamp(rng),
                "version": 1,
                "user": "user900",
                "uid": 900,
                "tags": {"historic": "wayside_cross"},
            }
        )
        node_id += 1

    return elements, per_region_nodes


def make_snapshot(rng: random.Random):
    elements, per_region_nodes = make_nodes(rng)

    extras = [
        {
            "type": "way",
            "id": 9001,
            "timestamp": "2015-03-02T10:00:00Z",
            "version": 2,
            "user": "user101",
            "uid": 101,
            "tags": {"historic": "wayside_cross"},
        },
        {
            "type": "relation",
            "id": 9002,
            "timestamp": "2016-07-12T08:30:00Z",
            "version": 1,
            "user": "user121",
            "uid": 121,
            "tags": {"historic": "wayside_cross"},
        },
        {
            "type": "node",
            "id": 9003,
            "lat": 48.62,
            "lon": 11.62,
            "timestamp": "2019-01-05T12:00:00Z",
            "version": 1,
            "user": "user131",
            "uid": 131,
            "tags": {"memorial:type": "cross"},
        },
        {
            "type": "node",
            "id": 9004,
            "lat": 48.63,
            "lon": 11.63,
            "timestamp": "2018-04-01T09:00:00Z",
            "version": 3,
            "user": "user131",
            "uid": 131,
            "tags": {"amenity": "bench"},
        },
        # node without coordinates: must land on the reject list
        {
            "type": "node",
            "id": 9005,
            "timestamp": "2018-04-01T09:00:00Z",
            "version": 1,
            "user": "user131",
            "uid": 131,
            "tags": {"historic": "wayside_cross"},
        },
    ]
    elements = elements + extras
    # duplicated id: the later occurrence (version bump) must win
    dup = dict(elements[0])
    dup["tags"] = dict(elements[0]["tags"])
    dup["version"] = elements[0]["version"] + 1
    elements.append(dup)

    return (
        {
            "version": 0.6,
            "generator": "fixture",
            "osm3s": {"timestamp_osm_base": SNAPSHOT_TIME},
            "elements": elements,
        },
        per_region_nodes,
    )


def point_feature(ref_id, lat, lon, classification):
    return {
        "type": "Feature",
        "properties": {"ref_id": ref_id, "classification": classification},
        "geometry": {"type": "Point", "coordinates": [round(lon, 7), round(lat, 7)]},
    }


def square_feature(ref_id, lat, lon, half_side_m, classification):
    dlat = half_side_m / M_PER_DEG
    dlon = half_side_m / (M_PER_DEG * math.cos(math.radians(lat)))
    ring = [
        [round(lon - dlon, 7), round(lat - dlat, 7)],
        [round(lon + dlon, 7), round(lat - dlat, 7)],
        [round(lon + dlon, 7), round(lat + dlat, 7)],
        [round(lon - dlon, 7), round(lat + dlat, 7)],
        [round(lon - dlon, 7), round(lat - dlat, 7)],
    ]
    return {
        "type": "Feature",
        "properties": {"ref_id": ref_id, "classification": classification},
        "geometry": {"type": "Polygon", "coordinates": [ring]},
    }


def make_references(per_region_nodes):
    def north_of(node, meters):
        return node["lat"] + meters / M_PER_DEG, node["lon"]

    # (region_index, node_index, offset_m, classification, shape)
    plan = [
        (4, 0, 3, "clearly_cross", "point"),
        (4, 1, 5, "clearly_cross", "point"),
        (4, 2, 8, "clearly_cross", "point"),
        (5, 0, 10, "clearly_cross", "point"),
        (5, 1, 12, "clearly_cross", "point"),
        (5, 2, 15, "clearly_cross", "square"),
        (5, 3, 20, "clearly_cross", "point"),
        (6, 0, 25, "clearly_cross", "point"),
        (6, 1, 25, "clearly_cross", "point"),
        (6, 2, 35, "clearly_cross", "square"),
        (6, 3, 40, "clearly_cross", "point"),
        (6, 4, 45, "clearly_cross", "point"),
        (7, 0, 60, "clearly_cross", "point"),
        (7, 1, 70, "clearly_cross", "square"),
        (7, 2, 80, "clearly_cross", "point"),
        (7, 3, 100, "clearly_cross", "point"),
        (4, 3, 120, "clearly_cross", "point"),
        (4, 4, 140, "clearly_cross", "point"),
        (5, 4, 200, "clearly_cross", "point"),
        (5, 5, 300, "clearly_cross", "point"),
        (6, 5, 400, "clearly_cross", "point"),
        (6, 6, 450, "clearly_cross", "point"),
        (7, 4, 480, "clearly_cross", "point"),
        (7, 5, 10, "unclear", "point"),
        (4, 5, 5, "other", "point"),
    ]
    features = []
    for i, (region_index, node_index, offset, classification, shape) in enumerate(plan):
        node = per_region_nodes[region_index][node_index]
        lat, lon = north_of(node, offset)
        ref_id = f"BLfD-{i + 1:03d}"
        if shape == "point":
            features.append(point_feature(ref_id, lat, lon, classification))
        else:
            features.append(square_feature(ref_id, lat, lon, 5.0, classification))

    # unmatched: region corners and a far-away spot (>500 m from any node)
    features.append(point_feature("BLfD-026", 48.0, 11.0, "clearly_cross"))
    features.append(point_feature("BLfD-027", 48.0, 11.5, "clearly_cross"))
    features.append(point_feature("BLfD-028", 47.3, 13.4, "clearly_cross"))
    # second excluded entry, far away
    features.append(point_feature("BLfD-029", 47.35, 13.0, "other"))
    # entry without a location
    features.append(
        {
            "type": "Feature",
            "properties": {"ref_id": "BLfD-030", "classification": "clearly_cross"},
            "geometry": None,
        }
    )
    return {"type": "FeatureCollection", "features": features}


def make_comparison(rng: random.Random) -> dict:
    elements = []
    for i in range(15):
        region_index = rng.randrange(8)
        lat0, lon0 = region_origin(region_index)
        elements.append(
            {
                "type": "node",
                "id": 5001 + i,
                "lat": round(rng.uniform(lat0 + 0.05, lat0 + 0.45), 7),
                "lon": round(rng.uniform(lon0 + 0.05, lon0 + 0.45), 7),
                "timestamp": random_timestamp(rng),
                "version": rng.choices([1, 2, 3, 4], weights=[30, 30, 25, 15])[0],
                "user": f"user{800 + i % 5}",
                "uid": 800 + i % 5,
                "tags": {"amenity": "post_box", "collection_times": "Mo-Fr 16:00"},
            }
        )
    return {
        "version": 0.6,
        "generator": "fixture",
        "osm3s": {"timestamp_osm_base": SNAPSHOT_TIME},
        "elements": elements,
    }


LEXICON = """surface;lemma
kreuze;Kreuz
kreuzes;Kreuz
wegkreuze;Wegkreuz
unserer;unser
herrn;Herr
gestorben;sterben
errichtet;errichten
verstorbenen;verstorben
"""

CORPUS_1900 = """# reference corpus, 1900-1999 slice
der\tdie\tART
Mann\tMann\tNN
ging\tgehen\tVVFIN
über\tüber\tAPPR
die\tdie\tART
Brücke\tBrücke\tNN
am\tan\tAPPRART
Morgen\tMorgen\tNN
.\t.\t$.
Die\tdie\tART
alte\talt\tADJA
Kirche\tKirche\tNN
stand\tstehen\tVVFIN
im\tin\tAPPRART
Dorf\tDorf\tNN
,\t,\t$,
und\tund\tKON
die\tdie\tART
Glocken\tGlocke\tNN
läuteten\tläuten\tVVFIN
laut\tlaut\tADJD
.\t.\t$.
Anna\tAnna\tNE
besuchte\tbesuchen\tVVFIN
1901\t1901\tCARD
ihre\tihr\tPPOSAT
Tante\tTante\tNN
in\tin\tAPPR
München\tMünchen\tNE
.\t.\t$.
Das\tdie\tART
Wetter\tWetter\tNN
war\tsein\tVAFIN
schön\tschön\tADJD
.\t.\t$.
"""

CORPUS_2000 = """# reference corpus, 2000-2010 slice
Die\tdie\tART
Forscher\tForscher\tNN
analysierten\tanalysieren\tVVFIN
2005\t2005\tCARD
die\tdie\tART
Daten\tDatum\tNN
im\tin\tAPPRART
Labor\tLabor\tNN
.\t.\t$.
Ein\tein\tART
neues\tneu\tADJA
Projekt\tProjekt\tNN
startete\tstarten\tVVFIN
in\tin\tAPPR
Berlin\tBerlin\tNE
,\t,\t$,
und\tund\tKON
viele\tviel\tPIAT
Teams\tTeam\tNN
arbeiteten\tarbeiten\tVVFIN
schnell\tschnell\tADJD
.\t.\t$.
Maria\tMaria\tNE
schrieb\tschreiben\tVVFIN
einen\tein\tART
langen\tlang\tADJA
Bericht\tBericht\tNN
über\tüber\tAPPR
das\tdie\tART
Internet\tInternet\tNN
.\t.\t$.
"""

TAGGED_NAME = """# tokens from name values
Wegkreuz\tWegkreuz\tNN
Feldkreuz\tFeldkreuz\tNN
Steinkreuz\tSteinkreuz\tNN
Kreuz\tKreuz\tNN
Wegkreuz\tWegkreuz\tNN
am\tan\tAPPRART
Weg\tWeg\tNN
Neunerkreuz\tNeunerkreuz\tNE
Nr\tNr\tNN
.\t.\t$.
3\t3\tCARD
Rotes\trot\tADJA
Kreuz\tKreuz\tNN
Marterl\tMarterl\tNN
Wegkreuz\tWegkreuz\tNN
Kreuz\tKreuz\tNN
Steinkreuz\tSteinkreuz\tNN
Marterl\tMarterl\tNN
Feldkreuz\tFeldkreuz\tNN
Huber\tHuber\tNE
"""

TAGGED_INSCRIPTION = """# tokens from inscription values
INRI\tINRI\tNE
INRI\tINRI\tNE
INRI\tINRI\tNE
1850\t1850\tCARD
O\tO\tITJ
Wanderer\tWanderer\tNN
steh\tstehen\tVVIMP
still\tstill\tADJD
und\tund\tKON
denk\tdenken\tVVIMP
an\tan\tAPPR
mich\tich\tPPER
Unser\tunser\tPPOSAT
Herr\tHerr\tNN
ist\tsein\tVAFIN
hier\thier\tADV
gestorben\tsterben\tVVPP
1887\t1887\tCARD
Zur\tzu\tAPPRART
Ehre\tEhre\tNN
Gottes\tGott\tNN
errichtet\terrichten\tVVPP
von\tvon\tAPPR
der\tdie\tART
Familie\tFamilie\tNN
Huber\tHuber\tNE
1902\t1902\tCARD
Hier\thier\tADV
ruht\truhen\tVVFIN
in\tin\tAPPR
Gott\tGott\tNN
.\t.\t$.
"""


def make_configs() -> tuple[dict, dict]:
    full = {
        "output_dir": "out",
        "snapshot_paths": ["snapshot.json"],
        "regions_path": "regions.geojson",
        "census_path": "census.csv",
        "references_path": "references.geojson",
        "lexicon_path": "lexicon.csv",
        "corpora_paths": {
            "corpus1900": "corpus_1900.tsv",
            "corpus2000": "corpus_2000.tsv",
        },
        "tagged_value_paths": {
            "name": "tagged_name.tsv",
            "inscription": "tagged_inscription.tsv",
        },
        "comparison_snapshot_paths": ["comparison_snapshot.json"],
        "comparison_label": "post_box",
        "cutoff_m": 500,
        "bin_edges_m": [30, 50, 150],
        "estimate_radii_m": [50, 150],
        "field_density": {
            "d_lo": 0.8,
            "d_hi": 1.8,
            "area_km2": 17530.0,
            "label": "field_survey",
        },
    }
    minimal = {
        "output_dir": "out_minimal",
        "snapshot_paths": ["snapshot.json"],
        "regions_path": "regions.geojson",
    }
    return full, minimal


def main() -> None:
    rng = random.Random(20230523)
    OUT.mkdir(parents=True, exist_ok=True)

    snapshot, per_region_nodes = make_snapshot(rng)
    (OUT / "snapshot.json").write_text(
        json.dumps(snapshot, ensure_ascii=False, indent=1) + "\n", encoding="utf-8"
    )
    (OUT / "regions.geojson").write_text(
        json.dumps(make_regions(), ensure_ascii=False, indent=1) + "\n",
        encoding="utf-8",
    )
    (OUT / "census.csv").write_text(make_census(), encoding="utf-8")
    (OUT / "references.geojson").write_text(
        json.dumps(make_references(per_region_nodes), ensure_ascii=False, indent=1)
        + "\n",
        encoding="utf-8",
    )
    (OUT / "comparison_snapshot.json").write_text(
        json.dumps(make_comparison(rng), ensure_ascii=False, indent=1) + "\n",
        encoding="utf-8",
    )
    (OUT / "lexicon.csv").write_text(LEXICON, encoding="utf-8")
    (OUT / "corpus_1900.tsv").write_text(CORPUS_1900, encoding="utf-8")
    (OUT / "corpus_2000.tsv").write_text(CORPUS_2000, encoding="utf-8")
    (OUT / "tagged_name.tsv").write_text(TAGGED_NAME, encoding="utf-8")
    (OUT / "tagged_inscription.tsv").write_text(TAGGED_INSCRIPTION, encoding="utf-8")

    full, minimal = make_configs()
    (OUT / "config.json").write_text(
        json.dumps(full, ensure_ascii=False, indent=1) + "\n", encoding="utf-8"
    )
    (OUT / "config_minimal.json").write_text(
        json.dumps(minimal, ensure_ascii=False, indent=1) + "\n", encoding="utf-8"
    )
    print(f"fixtures written to {OUT}")


if __name__ == "__main__":
    main()
