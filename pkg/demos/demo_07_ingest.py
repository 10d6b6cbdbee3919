"""
From raw tables to datasets
===========================

Both ingest pipelines run on tiny hand-written files.  Missing SUPPORT2
cells become -1.  PhysioNet-style measurements are averaged into 30-minute
bins over the first 48 hours.
"""

import tempfile
from pathlib import Path

from censurv import to_outcome, validate_dataset
from censurv.pipelines import IngestConfig, ingest_physionet, ingest_support2

tmp = Path(tempfile.mkdtemp())
(tmp / "support2.csv").write_text(
    "id,age,sex,scoma,d.time,death,hospdead\n"
    "1,62.8,male,0,100,1,0\n"
    "2,45.0,female,,2029,0,0\n"
)
cfg = IngestConfig.support2(id_column="id", categorical_columns=("sex",))
table = ingest_support2(tmp / "support2.csv", cfg)
print("grid:", table.grid.describe())
print("attributes:", table.attribute_names)
for r in table:
    print(r.id, r.attributes, to_outcome(r.label, table.grid))
print("violations:", validate_dataset(table))

###############################################################################
records = tmp / "set-a"
records.mkdir()
(records / "1001.txt").write_text(
    "Time,Parameter,Value\n00:00,RecordID,1001\n00:17,HR,80\n00:25,HR,90\n02:40,Temp,37.2\n"
)
(tmp / "Outcomes-a.txt").write_text("RecordID,Length_of_stay,Survival\n1001,9,30\n")
icu = ingest_physionet(records, tmp / "Outcomes-a.txt")
r = icu.records[0]
hr = list(icu.context_names).index("HR")
print("context shape:", r.context.shape, " HR in bin 0:", r.context[0, hr])
print("outcome:", to_outcome(r.label, icu.grid), "on", icu.grid.describe())
