"""Reference inventory for the synthetic episode generator.

Types are grouped Few-NERD style: a coarse-grained group (``person``)
holds fine-grained types (``person-artist``). Each fine type carries a
handful of head words. A generated mention ends with one of them, the
way "Kalo Mirten river" or "Vel painter" name what they are. Within one
episode a type always uses the same head word, so its support and query
mentions share it.

The rest of a mention is pseudo-words built from ``SYLLABLES`` by the
generator; they carry no type signal of their own.
"""

TYPE_INVENTORY: dict[str, dict[str, tuple[str, ...]]] = {
    "person": {
        "person-artist": ("painter", "sculptor", "singer"),
        "person-athlete": ("striker", "sprinter", "goalkeeper"),
        "person-politician": ("senator", "minister", "mayor"),
        "person-scholar": ("professor", "historian", "chemist"),
        "person-soldier": ("general", "sergeant", "admiral"),
    },
    "location": {
        "location-city": ("city", "town", "capital"),
        "location-river": ("river", "stream", "estuary"),
        "location-mountain": ("mountain", "peak", "summit"),
        "location-island": ("island", "atoll", "archipelago"),
        "location-park": ("park", "reserve", "garden"),
    },
    "organization": {
        "organization-company": ("company", "firm", "corporation"),
        "organization-university": ("university", "college", "academy"),
        "organization-team": ("team", "club", "squad"),
        "organization-party": ("party", "coalition", "caucus"),
        "organization-band": ("band", "ensemble", "orchestra"),
    },
    "product": {
        "product-car": ("car", "sedan", "coupe"),
        "product-software": ("software", "app", "compiler"),
        "product-ship": ("ship", "frigate", "vessel"),
        "product-weapon": ("rifle", "cannon", "missile"),
        "product-food": ("dish", "cheese", "pastry"),
    },
    "event": {
        "event-war": ("war", "siege", "campaign"),
        "event-festival": ("festival", "carnival", "fair"),
        "event-election": ("election", "referendum", "primary"),
        "event-tournament": ("tournament", "cup", "championship"),
        "event-disaster": ("earthquake", "flood", "hurricane"),
    },
    "art": {
        "art-film": ("film", "movie", "documentary"),
        "art-novel": ("novel", "memoir", "saga"),
        "art-painting": ("painting", "fresco", "portrait"),
        "art-song": ("song", "ballad", "anthem"),
        "art-play": ("play", "opera", "musical"),
    },
}

# Each "[E]" marks an entity slot: pseudo-word phrase followed by a head word.
TEMPLATES: tuple[str, ...] = (
    "we talked about the [E] yesterday .",
    "the [E] was mentioned in the morning report .",
    "everyone remembers the [E] from last year .",
    "according to the article , the [E] changed a lot .",
    "nobody expected the [E] to appear there .",
    "the [E] and the [E] were discussed together .",
    "after the meeting , the [E] thanked the [E] .",
    "a letter about the [E] reached the [E] on monday .",
    "critics compared the [E] with the [E] again .",
    "the [E] , the [E] and the [E] shared the headline .",
    "between the [E] and the [E] stood the [E] .",
    "reports linked the [E] to the [E] and later to the [E] .",
)

ENTITY_SLOT = "[E]"

SYLLABLES: tuple[str, ...] = (
    "ka", "lo", "mi", "ren", "sa", "tor", "vel", "zu", "bar", "dan",
    "el", "fi", "gor", "ha", "is", "jun", "ko", "lin", "mar", "no",
    "or", "pa", "qui", "ros", "ti", "ul", "ven", "wa", "xi", "yor",
)
