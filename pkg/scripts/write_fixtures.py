"""Write the bundled fixture problem files used by the README examples."""

import json
from pathlib import Path

from polyot.geometry import polygon_area
from polyot.shapes import dumbbell, lshape, separated_squares, square_for

OUT = Path(__file__).resolve().parents[1] / "fixtures"


def main():
    OUT.mkdir(exist_ok=True)
    lsh = lshape()
    (OUT / "lshape.json").write_text(
        json.dumps(
            {
                "source": square_for(lsh).to_json(),
                "target": lsh.to_json(),
                "n_sites": 800,
                "seed": 7,
                "lloyd": 10,
                "tol": 1e-7,
            },
            indent=1,
        )
    )
    db = dumbbell()
    (OUT / "dumbbell.json").write_text(
        json.dumps(
            {
                "source": square_for(db).to_json(),
                "target": db.to_json(),
                "n_sites": 800,
                "seed": 7,
                "lloyd": 10,
                "tol": 1e-7,
            },
            indent=1,
        )
    )
    src, tgt = separated_squares()
    (OUT / "squares.json").write_text(
        json.dumps(
            {
                "source": src.to_json(),
                "target": tgt.to_json(),
                "mass": 0.5 * min(polygon_area(src), polygon_area(tgt)),
                "n_sites": 256,
                "seed": 4,
            },
            indent=1,
        )
    )
    print(f"fixtures written to {OUT}")


if __name__ == "__main__":
    main()
