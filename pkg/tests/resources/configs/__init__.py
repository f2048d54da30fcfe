import json

SMALL_CONFIG = "tests/resources/configs/small.json"
BENCHMARK_CONFIG = "tests/resources/configs/benchmark.json"
BROKEN_CONFIG = "tests/resources/configs/broken.json"
UNKNOWN_KEY_CONFIG = "tests/resources/configs/unknown_key.json"

with open(SMALL_CONFIG) as json_data:
    small_config_json = json.load(json_data)

with open(BENCHMARK_CONFIG) as json_data:
    benchmark_config_json = json.load(json_data)
