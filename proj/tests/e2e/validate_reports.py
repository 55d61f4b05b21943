import json
import pathlib
import sys

import jsonschema

schema = json.loads(pathlib.Path(sys.argv[1]).read_text())
failed = 0
for out in sys.argv[2:]:
    reports = sorted(pathlib.Path(out, "reports").glob("*.json"))
    if not reports:
        print(f"no reports under {out}")
        failed += 1
    for path in reports:
        try:
            jsonschema.validate(json.loads(path.read_text()), schema)
            print(f"ok   {path}")
        except jsonschema.ValidationError as e:
            print(f"FAIL {path}: {e.message} at {list(e.absolute_path)}")
            failed += 1
sys.exit(1 if failed else 0)
