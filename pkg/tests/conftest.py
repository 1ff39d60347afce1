"""Shared fixtures: the two-turn demo dialogue (with byte-exact rendered
input strings), its database/ontology/value-mapping sidecars, and a
generated 20-turn clean dataset used for fault-injection and protocol
tests."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from todkit.data import (
    ActItem,
    ActSeq,
    ApiCall,
    BeliefState,
    Dataset,
    Dialogue,
    EntitySpan,
    SlotTriplet,
    Turn,
    load_dataset,
)
from todkit.kb import Database, Ontology, load_database, load_ontology
from todkit.valuemap import ValueMapping, load_value_mapping

FIXTURES = Path(__file__).parent / "fixtures"

# The four rendered subtask input strings for the demo dialogue, pinned
# byte-for-byte (turn-1 DST/API/DA and turn-2 RG).
T1_USER = ("Hi, my friend is coming to Suzhou to visit me, I want to take him to a "
           "commercial center in the mid-price range. Do you have anything to recommend?")
T2_USER = "Oh yeah, why didn't I think of that? When is it open?"

T1_STATE = '( attraction ) consumption " mid " , type " commercial center "'
T1_KNOWLEDGE = (
    '( attraction ) address " Guanqian Street, Gusu District, Suzhou City. " , '
    'area " Gusu District " , available_options " 4 " , consumption " moderate " , '
    'metro_station " true " , name " Guanqian Street " , opening_hours " all day " , '
    'phone_number " N/A " , score " 4.3 " , the_most_suitable_people " friends " , '
    'ticket_price " free " , type " commercial center "'
)

EXPECTED_T1_DST_INPUT = (
    f"DST: <state> null <endofstate> <history> USER: {T1_USER} <endofhistory>"
)
EXPECTED_T1_API_INPUT = (
    f"API: <knowledge> null <endofknowledge> <state> {T1_STATE} <endofstate> "
    f"<history> USER: {T1_USER} <endofhistory>"
)
EXPECTED_T1_DA_INPUT = (
    f"DA: <knowledge> {T1_KNOWLEDGE} <endofknowledge> <state> {T1_STATE} <endofstate> "
    f"<history> USER: {T1_USER} <endofhistory>"
)
EXPECTED_T2_RG_INPUT = (
    'RG: <actions> ( attraction ) inform opening_hours " all day " <endofactions> '
    f"<history> USER: {T2_USER} <endofhistory>"
)

# Grammar strings from the demo dialogue, pinned in canonical form.
DEMO_STATE_STRINGS = [
    '( attraction ) consumption " mid " , type " commercial center "',
    '( attraction ) consumption " mid " , name " Guanqian Street " , '
    'the_most_suitable_people " friend " , type " commercial center "',
]
DEMO_ACT_STRINGS = [
    '( attraction ) recommend name " Guanqian Street "',
    '( attraction ) inform opening_hours " all day "',
]


@pytest.fixture(scope="session")
def demo_path() -> Path:
    return FIXTURES / "demo_dialogue.json"


@pytest.fixture(scope="session")
def demo_dataset(demo_path) -> Dataset:
    return load_dataset(demo_path)


@pytest.fixture(scope="session")
def demo_db() -> Database:
    return load_database(FIXTURES / "demo_db.json")


@pytest.fixture(scope="session")
def demo_ontology() -> Ontology:
    return load_ontology(FIXTURES / "demo_ontology.json")


@pytest.fixture(scope="session")
def demo_vm() -> ValueMapping:
    return load_value_mapping(FIXTURES / "demo_value_mapping.json")


# ---------------------------------------------------------------------------
# Generated 20-turn clean fixture (4 dialogues x 5 turns, hotel domain).


def _span(utt: str, value: str, slot: str, side: str,
          relation: str = "equal_to") -> EntitySpan:
    at = utt.find(value)
    assert at >= 0, f"{value!r} not in {utt!r}"
    return EntitySpan("hotel", slot, relation, value, at, at + len(value), side)


_HOTELS = ["Golden Inn", "River Lodge", "Plaza Hotel", "Sunrise Hostel"]
_AREAS = ["north", "south", "east", "west"]
_PRICE_SURFACE = ["mid-range", "budget-friendly", "top-end", "low-cost"]
_PRICE_CANON = ["moderate", "cheap", "expensive", "cheap"]
_STARS = ["4", "3", "5", "2"]
_SCORES = ["4.5", "4.2", "4.8", "3.9"]
_ADDRESSES = ["12 Canal Road", "7 Harbor Lane", "99 Summit Avenue", "3 Meadow Way"]
_PHONES = ["0512-880101", "0512-880202", "0512-880303", "0512-880404"]
_COMFORTS = ["free wifi", "a gym", "a pool", "breakfast buffet"]
_PEOPLE = ["2 people", "3 people", "4 people", "5 people"]


def build_clean_fixture() -> tuple[Dataset, Database, Ontology]:
    """Four five-turn hotel dialogues where every annotation atom is anchored
    (occurrence or span), every API call reproduces its recorded results, and
    span counts match exactly.  The turn-1 pricerange value is canonical and
    anchored only by its span, so removing that span makes it unfindable."""
    dialogues = []
    records = []
    for d in range(4):
        hotel, area = _HOTELS[d], _AREAS[d]
        surface, canon = _PRICE_SURFACE[d], _PRICE_CANON[d]
        stars, score = _STARS[d], _SCORES[d]
        address, phone = _ADDRESSES[d], _PHONES[d]
        comfort, people = _COMFORTS[d], _PEOPLE[d]
        record = {"name": hotel, "area": area, "pricerange": canon, "stars": stars,
                  "score": score, "address": address, "phone": phone,
                  "comforts": comfort, "people": people}
        records.append(record)

        def triplet(slot, value):
            return SlotTriplet("hotel", slot, "equal_to", value)

        accumulated = []
        turns = []

        # turn 0: area constraint, hotel recommendation
        accumulated.append(triplet("area", area))
        user = f"I am looking for a hotel in the {area} part of town."
        agent = f"How about {hotel}?"
        turns.append(Turn(
            turn_id=0, user_utterance=user,
            belief_state=BeliefState(tuple(accumulated)),
            agent_acts=ActSeq((ActItem("hotel", "recommend", "name", "equal_to", hotel),)),
            agent_utterance=agent,
            spans=(_span(user, area, "area", "user"),
                   _span(agent, hotel, "name", "agent")),
        ))

        # turn 1: canonical pricerange anchored only by its span
        accumulated.append(triplet("pricerange", canon))
        user = f"Something {surface} would be great."
        agent = f"It has a review score of {score}."
        span = _span(user, surface, "pricerange", "user")
        turns.append(Turn(
            turn_id=1, user_utterance=user,
            belief_state=BeliefState(tuple(accumulated)),
            agent_acts=ActSeq((ActItem("hotel", "inform", "score", "equal_to", score),)),
            agent_utterance=agent,
            spans=(span, _span(agent, score, "score", "agent")),
        ))

        # turn 2: stars constraint plus an API call
        accumulated.append(triplet("stars", stars))
        user = f"I want a {stars} star place."
        agent = f"It is at {address}."
        turns.append(Turn(
            turn_id=2, user_utterance=user,
            belief_state=BeliefState(tuple(accumulated)),
            api_call=ApiCall("hotel", tuple(accumulated)),
            api_results=(dict(record),),
            agent_acts=ActSeq((ActItem("hotel", "inform", "address", "equal_to", address),)),
            agent_utterance=agent,
            spans=(_span(user, stars, "stars", "user"),
                   _span(agent, address, "address", "agent")),
        ))

        # turn 3: comfort request, phone number answer
        accumulated.append(triplet("comforts", comfort))
        user = f"I also need {comfort} during my stay."
        agent = f"Noted. You can call {phone} to arrange it."
        turns.append(Turn(
            turn_id=3, user_utterance=user,
            belief_state=BeliefState(tuple(accumulated)),
            agent_acts=ActSeq((ActItem("hotel", "inform", "phone", "equal_to", phone),)),
            agent_utterance=agent,
            spans=(_span(user, comfort, "comforts", "user"),
                   _span(agent, phone, "phone", "agent")),
        ))

        # turn 4: head count, final API call, closing act
        accumulated.append(triplet("people", people))
        user = f"We will be {people} in total."
        agent = "Great, enjoy your stay!"
        turns.append(Turn(
            turn_id=4, user_utterance=user,
            belief_state=BeliefState(tuple(accumulated)),
            api_call=ApiCall("hotel", tuple(accumulated)),
            api_results=(dict(record),),
            agent_acts=ActSeq((ActItem("hotel", "general"),)),
            agent_utterance=agent,
            spans=(_span(user, people, "people", "user"),),
        ))

        dialogues.append(Dialogue(dialogue_id=f"hotel-{d:03d}", domains=("hotel",),
                                  turns=tuple(turns)))

    db = Database({"hotel": records})
    slots: dict[str, list[str]] = {}
    for record in records:
        for slot, value in record.items():
            slots.setdefault(slot, [])
            if value not in slots[slot]:
                slots[slot].append(value)
    ontology = Ontology({"hotel": {s: tuple(v) for s, v in slots.items()}})
    return Dataset(tuple(dialogues)), db, ontology


@pytest.fixture(scope="session")
def clean_fixture() -> tuple[Dataset, Database, Ontology]:
    return build_clean_fixture()


@pytest.fixture()
def clean_dataset(clean_fixture) -> Dataset:
    return clean_fixture[0]


@pytest.fixture()
def clean_db(clean_fixture) -> Database:
    return clean_fixture[1]


@pytest.fixture()
def clean_ontology(clean_fixture) -> Ontology:
    return clean_fixture[2]


def dataset_json(ds: Dataset) -> str:
    from todkit.data import dataset_to_obj
    return json.dumps(dataset_to_obj(ds), ensure_ascii=False)
