import json
import sys

import jsonschema

schema_path, report_path = sys.argv[1], sys.argv[2]
with open(schema_path) as f:
    schema = json.load(f)
with open(report_path) as f:
    report = json.load(f)
jsonschema.validate(report, schema, cls=jsonschema.Draft202012Validator)
ids = sorted(c["id"] for c in report["criteria"])
if ids != list(range(1, 12)):
    sys.exit(f"criteria ids {ids}, expected 1..11")
print(f"{report_path}: schema valid, passed={report['passed']}")
