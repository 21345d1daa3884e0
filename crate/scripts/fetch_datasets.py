#!/usr/bin/env python3
"""Fetch the benchmark datasets used by the acceptance suite.

The three tables are redistributed inside PyPI wheels, so only a package
index is needed:

  california_housing  pytorch-widedeep  (StatLib California housing, 20640 x 8)
  compas              responsibly       (ProPublica compas-scores-two-years)
  diabetes            imbalanced-databases (Pima Indians diabetes, 768 x 8)

Each dataset is written as <name>.csv plus a <name>.schema.json sidecar.
"""
import argparse
import glob
import io
import json
import os
import subprocess
import sys
import tempfile
import zipfile

import pandas as pd


def wheel(pkg, workdir):
    dest = os.path.join(workdir, pkg)
    subprocess.run(
        [sys.executable, "-m", "pip", "download", "--no-deps", "-q", pkg, "-d", dest],
        check=True,
    )
    return zipfile.ZipFile(glob.glob(os.path.join(dest, "*.whl"))[0])


def write(out, name, df, features, target):
    df.to_csv(os.path.join(out, f"{name}.csv"), index=False, float_format="%.10g")
    with open(os.path.join(out, f"{name}.schema.json"), "w") as fh:
        json.dump({"features": features, "target": target}, fh, indent=2)
        fh.write("\n")
    print(f"{name}: {df.shape[0]} rows, {len(features)} features")


def california(z, out):
    raw = z.read("pytorch_widedeep/datasets/data/california_housing.parquet.brotli")
    df = pd.read_parquet(io.BytesIO(raw))
    cols = ["MedInc", "HouseAge", "AveRooms", "AveBedrms", "Population", "AveOccup",
            "Latitude", "Longitude"]
    df = df[cols + ["MedHouseVal"]]
    feats = [{"name": c, "kind": "continuous"} for c in cols]
    write(out, "california_housing", df, feats,
          {"name": "MedHouseVal", "task": "regression"})


def compas(z, out):
    raw = z.read("responsibly/dataset/compas/compas-scores-two-years.csv")
    df = pd.read_csv(io.BytesIO(raw))
    # ProPublica filtering, 6172 rows remain.
    df = df[(df.days_b_screening_arrest <= 30) & (df.days_b_screening_arrest >= -30)]
    df = df[(df.is_recid != -1) & (df.c_charge_degree != "O") & (df.score_text != "N/A")]
    jail_in = pd.to_datetime(df.c_jail_in)
    jail_out = pd.to_datetime(df.c_jail_out)
    df = df.assign(length_of_stay=(jail_out - jail_in).dt.days)
    df = df.assign(c_days_from_compas=df.c_days_from_compas.fillna(0))
    cat = {
        "sex": ["Female", "Male"],
        "age_cat": ["Less than 25", "25 - 45", "Greater than 45"],
        "race": sorted(df.race.unique().tolist()),
        "c_charge_degree": ["F", "M"],
    }
    cols = ["sex", "age", "age_cat", "race", "juv_fel_count", "juv_misd_count",
            "juv_other_count", "priors_count", "c_charge_degree", "length_of_stay",
            "days_b_screening_arrest", "c_days_from_compas"]
    df = df[cols + ["two_year_recid"]].reset_index(drop=True)
    df["days_b_screening_arrest"] = df["days_b_screening_arrest"].astype(int)
    df["c_days_from_compas"] = df["c_days_from_compas"].astype(int)
    feats = []
    for c in cols:
        if c in cat:
            feats.append({"name": c, "kind": "categorical", "categories": cat[c]})
        else:
            feats.append({"name": c, "kind": "continuous"})
    write(out, "compas", df, feats,
          {"name": "two_year_recid", "task": "classification", "classes": ["0", "1"]})


def diabetes(z, out):
    text = z.read("imbalanced_databases/data/pima/pima.dat").decode()
    names, rows = [], []
    for line in text.splitlines():
        line = line.strip()
        if line.lower().startswith("@attribute"):
            names.append(line.split()[1])
        elif line and not line.startswith("@"):
            rows.append(line.split(","))
    df = pd.DataFrame(rows, columns=names)
    cols = ["Pregnancies", "Glucose", "BloodPressure", "SkinThickness", "Insulin",
            "BMI", "DiabetesPedigreeFunction", "Age"]
    df.columns = cols + ["Outcome"]
    for c in cols:
        df[c] = pd.to_numeric(df[c])
    df["Outcome"] = (df["Outcome"].str.strip() == "positive").astype(int)
    feats = [{"name": c, "kind": "continuous"} for c in cols]
    write(out, "diabetes", df, feats,
          {"name": "Outcome", "task": "classification", "classes": ["0", "1"]})


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..", "data"))
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        california(wheel("pytorch-widedeep", tmp), args.out)
        compas(wheel("responsibly", tmp), args.out)
        diabetes(wheel("imbalanced-databases", tmp), args.out)


if __name__ == "__main__":
    main()
