"""Regenerates samples/sample_bundle: a three-page report with one table and two figures."""
import json
import pathlib

from PIL import Image, ImageDraw

ROOT = pathlib.Path(__file__).resolve().parent.parent / "samples" / "sample_bundle"
PAGE_SIZE = (200, 260)

PAGES = [
    "1 Introduction\n"
    "This annual report reviews revenue across three sales regions.\n"
    "Revenue rose twelve percent during the fiscal year.",
    "2 Results\n"
    "Table 1: Revenue by region in millions of dollars.\n"
    "The northern region led all regions with forty million in revenue.\n"
    "2.1 Regional Detail\n"
    "The southern region grew fastest at eighteen percent.",
    "Figure 1: Quarterly revenue trend.\n"
    "The chart shows steady growth through the fourth quarter.\n"
    "3 Conclusion\n"
    "Management expects growth to continue next year.",
]

ELEMENTS = {
    2: [{"kind": "table", "label": "Table 1", "caption": "Revenue by region in millions of dollars.",
         "bbox": [20, 40, 180, 120], "color": (70, 130, 180)}],
    3: [{"kind": "chart", "label": "Figure 1", "caption": "Quarterly revenue trend.",
         "bbox": [20, 20, 180, 110], "color": (200, 120, 40)},
        {"kind": "figure", "bbox": [60, 200, 140, 250], "color": (90, 160, 90)}],
}


def save(img, rel):
    img.save(ROOT / rel, format="PNG", optimize=False)
    return rel


def main():
    (ROOT / "images").mkdir(parents=True, exist_ok=True)
    pages = []
    for number, text in enumerate(PAGES, start=1):
        shot = Image.new("RGB", PAGE_SIZE, "white")
        draw = ImageDraw.Draw(shot)
        for i, line in enumerate(text.split("\n")):
            draw.rectangle([10, 10 + 14 * i, 10 + 3 * len(line) // 2, 18 + 14 * i], fill=(40, 40, 40))
        extracted = []
        for index, el in enumerate(ELEMENTS.get(number, []), start=1):
            x0, y0, x1, y1 = el["bbox"]
            draw.rectangle([x0, y0, x1 - 1, y1 - 1], fill=el["color"])
            crop = Image.new("RGB", (x1 - x0, y1 - y0), el["color"])
            entry = {"kind": el["kind"], "bbox": el["bbox"],
                     "image": save(crop, f"images/p{number}-e{index}.png")}
            for key in ("label", "caption"):
                if key in el:
                    entry[key] = el[key]
            extracted.append(entry)
        pages.append({"number": number, "text": text,
                      "screenshot": save(shot, f"images/page{number}.png"),
                      "width": PAGE_SIZE[0], "height": PAGE_SIZE[1], "extracted": extracted})
    manifest = {"doc_id": "sample-report", "pages": pages}
    (ROOT / "bundle.json").write_text(json.dumps(manifest, indent=2) + "\n")


if __name__ == "__main__":
    main()
