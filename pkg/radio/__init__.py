# PHY rate table, channel models and link adaptation
