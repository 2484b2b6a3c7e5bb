"""Word lists shared by query planning and the heuristic judge."""

# function words plus data-seeking filler that carries no topic
STOPWORDS = frozenset(
    """
    a about above after all also an and any are as at be been being below between both but by
    can could did do does doing for from get give had has have having here how i if in into is
    it its just list me more most my need of on or other our out over please show so some such
    than that the their them then there these they this those through to under up us using
    was we were what when where which while who whom why will with would you your
    data dataset datasets database information info find search looking look want statistics
    stats figures numbers
    """.split()
)

# formats that count as machine-readable download targets
MACHINE_READABLE_EXTS = ("csv", "tsv", "json", "xml", "rdf", "ttl", "xlsx", "parquet", "zip")

UNIT_WORDS = frozenset(
    """
    percent percentage % people persons residents households homes cases deaths births
    million millions billion billions thousand thousands tons tonnes kg kilograms km kilometers
    miles mi meters metres degrees ppm ppb µg/m3 ug/m3 mg/l dollars usd eur euros $ per rate
    hectares acres students patients visits trips vehicles units jobs workers
    """.split()
)

METADATA_TERMS = (
    "doi", "license", "licence", "publisher", "data dictionary", "codebook", "variables",
    "provenance", "identifier", "citation", "cite this dataset", "temporal coverage",
    "spatial coverage", "version", "last updated", "date modified", "keywords", "creator",
    "metadata", "file format", "schema", "maintainer",
)

EXPLORER_MARKERS = (
    "dashboard", "interactive map", "interactive chart", "data explorer", "visualization",
    "visualisation", "explore the data", "chart", "map viewer",
)

NARRATIVE_DATA_WORDS = frozenset(
    "data statistics survey percent report figures study analysis census rate".split()
)

_US_STATES = """
alabama alaska arizona arkansas california colorado connecticut delaware florida georgia
hawaii idaho illinois indiana iowa kansas kentucky louisiana maine maryland massachusetts
michigan minnesota mississippi missouri montana nebraska nevada ohio oklahoma oregon
pennsylvania tennessee texas utah vermont virginia washington wisconsin wyoming
""".split()
_MULTI = [
    "new hampshire", "new jersey", "new mexico", "new york", "north carolina", "north dakota",
    "rhode island", "south carolina", "south dakota", "west virginia", "los angeles",
    "san francisco", "san diego", "new orleans", "las vegas", "united states", "united kingdom",
    "new zealand", "south africa", "hong kong",
]
_CITIES = """
baltimore boston chicago houston phoenix philadelphia dallas austin seattle denver detroit
atlanta miami portland minneapolis pittsburgh cleveland nashville memphis milwaukee
london paris berlin tokyo toronto sydney madrid rome beijing shanghai mumbai delhi
""".split()
_COUNTRIES = """
usa america canada mexico brazil argentina chile peru colombia uk england scotland wales
ireland france germany spain italy portugal netherlands belgium switzerland austria sweden
norway denmark finland poland greece turkey russia ukraine china japan korea india pakistan
bangladesh indonesia australia nigeria kenya egypt ethiopia ghana
""".split()

PLACES = tuple(sorted(set(_US_STATES + _CITIES + _COUNTRIES + _MULTI), key=lambda p: (-len(p), p)))
