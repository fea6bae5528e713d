#!/usr/bin/env python3
# Copyright 2026 The Desc2Story Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Join VIST description-in-isolation and story-in-sequence annotations into JSON Lines."""
import argparse
import json
import sys
from collections import defaultdict


def load_annotations(path):
    with open(path, encoding="utf-8") as f:
        data = json.load(f)
    for group in data["annotations"]:
        for ann in group:
            yield ann


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dii", required=True, help="e.g. train.description-in-isolation.json")
    ap.add_argument("--sis", required=True, help="e.g. train.story-in-sequence.json")
    ap.add_argument("--output", "-o", required=True, help="JSON Lines file to write")
    ap.add_argument("--keep-partial", action="store_true",
                    help="keep stories where some images lack a description")
    args = ap.parse_args()

    captions = {}
    for ann in load_annotations(args.dii):
        captions.setdefault(str(ann["photo_flickr_id"]), ann["text"])

    stories = defaultdict(list)
    for ann in load_annotations(args.sis):
        stories[str(ann["story_id"])].append(ann)

    written = skipped = 0
    with open(args.output, "w", encoding="utf-8") as out:
        for story_id in sorted(stories, key=lambda s: (len(s), s)):
            parts = sorted(stories[story_id], key=lambda a: int(a["worker_arranged_photo_order"]))
            descs = [captions.get(str(a["photo_flickr_id"])) for a in parts]
            if not args.keep_partial and any(d is None for d in descs):
                skipped += 1
                continue
            record = {
                "id": story_id,
                "descriptions": [d for d in descs if d is not None],
                "story": " ".join(a["text"] for a in parts),
            }
            out.write(json.dumps(record, ensure_ascii=False) + "\n")
            written += 1
    print(f"wrote {written} documents, skipped {skipped}", file=sys.stderr)


if __name__ == "__main__":
    main()
