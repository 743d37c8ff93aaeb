import copy
import json
import importlib.resources

import pytest


@pytest.fixture(scope="session")
def paper_doc():
    """Shipped reference scenario as a dict (copy before mutating)."""
    text = importlib.resources.files("raaloc").joinpath(
        "data/paper_scenario.json").read_text()
    return json.loads(text)


@pytest.fixture()
def doc_factory(paper_doc):
    def make(**mods):
        doc = copy.deepcopy(paper_doc)
        if "trials" in mods:
            doc["simulation"]["trials"] = mods.pop("trials")
        if "seed" in mods:
            doc["simulation"]["master_seed"] = mods.pop("seed")
        if "gain_db" in mods:
            doc["raas"][0]["gain_db"] = mods.pop("gain_db")
        if "tracking" in mods:
            doc["trx"]["tracking"] = mods.pop("tracking")
        if "mode" in mods:
            doc["channel"]["mode"] = mods.pop("mode")
        assert not mods, f"unknown factory mods {mods}"
        return doc
    return make
